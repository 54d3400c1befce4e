#include "rcnet/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace rcnet {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

struct FieldError {
  std::string message;
};

std::size_t to_count(const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw FieldError{"expected a non-negative integer, got '" + v + "'"};
  return out;
}

double to_double(const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw FieldError{"expected a number, got '" + v + "'"};
    return d;
  } catch (const std::logic_error&) {
    throw FieldError{"expected a number, got '" + v + "'"};
  }
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw FieldError{"expected true or false, got '" + v + "'"};
}

std::string num(double v) { return fmt::format("{}", v); }
std::string flag(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
std::pair<std::string, Field> count_field(std::string key, Access access) {
  return {std::move(key),
          {[access](RunConfig& c, const std::string& v) { access(c) = to_count(v); },
           [access](const RunConfig& c) { return std::to_string(access(c)); }}};
}

template <typename Access>
std::pair<std::string, Field> double_field(std::string key, Access access) {
  return {std::move(key),
          {[access](RunConfig& c, const std::string& v) { access(c) = to_double(v); },
           [access](const RunConfig& c) { return num(access(c)); }}};
}

template <typename Access>
std::pair<std::string, Field> bool_field(std::string key, Access access) {
  return {std::move(key),
          {[access](RunConfig& c, const std::string& v) { access(c) = to_bool(v); },
           [access](const RunConfig& c) { return flag(access(c)); }}};
}

template <typename Access>
std::pair<std::string, Field> string_field(std::string key, Access access) {
  return {std::move(key),
          {[access](RunConfig& c, const std::string& v) { access(c) = v; },
           [access](const RunConfig& c) { return access(c); }}};
}

// Serialisation order is the order of this table.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"task",
       {[](RunConfig& c, const std::string& v) {
          if (v == "denoise") c.task = Task::denoise;
          else if (v == "sr") c.task = Task::sr;
          else if (v == "sr_blind") c.task = Task::sr_blind;
          else throw FieldError{"expected denoise, sr or sr_blind, got '" + v + "'"};
        },
        [](const RunConfig& c) { return to_string(c.task); }}},
      {"precision",
       {[](RunConfig& c, const std::string& v) {
          if (v == "single") c.precision = Precision::single;
          else if (v == "double") c.precision = Precision::double_;
          else throw FieldError{"expected single or double, got '" + v + "'"};
        },
        [](const RunConfig& c) { return to_string(c.precision); }}},
      {"seed",
       {[](RunConfig& c, const std::string& v) { c.seed = to_count(v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      string_field("out", [](auto& c) -> auto& { return c.out_dir; }),
      {"model.kind",
       {[](RunConfig& c, const std::string& v) {
          if (v == "rcnet") c.net.kind = NetKind::rcnet;
          else if (v == "win") c.net.kind = NetKind::win;
          else throw FieldError{"expected rcnet or win, got '" + v + "'"};
        },
        [](const RunConfig& c) { return to_string(c.net.kind); }}},
      count_field("model.in_channels", [](auto& c) -> auto& { return c.net.in_channels; }),
      count_field("model.n_dense", [](auto& c) -> auto& { return c.net.n_dense; }),
      count_field("model.k_dense", [](auto& c) -> auto& { return c.net.k_dense; }),
      count_field("model.num_blocks", [](auto& c) -> auto& { return c.net.num_blocks; }),
      count_field("model.width", [](auto& c) -> auto& { return c.net.block.width; }),
      count_field("model.k_large", [](auto& c) -> auto& { return c.net.block.k_large; }),
      count_field("model.k_small", [](auto& c) -> auto& { return c.net.block.k_small; }),
      bool_field("model.use_bn", [](auto& c) -> auto& { return c.net.use_bn; }),
      bool_field("model.remove_second_dense", [](auto& c) -> auto& { return c.net.remove_second_dense; }),
      bool_field("model.desk_scale", [](auto& c) -> auto& { return c.net.desk_scale; }),
      double_field("optim.lr0", [](auto& c) -> auto& { return c.optim.lr0; }),
      double_field("optim.momentum", [](auto& c) -> auto& { return c.optim.momentum; }),
      double_field("optim.weight_decay", [](auto& c) -> auto& { return c.optim.weight_decay; }),
      count_field("optim.lr_drop_every", [](auto& c) -> auto& { return c.optim.lr_drop_every; }),
      double_field("optim.lr_drop_factor", [](auto& c) -> auto& { return c.optim.lr_drop_factor; }),
      count_field("optim.batch_size", [](auto& c) -> auto& { return c.optim.batch_size; }),
      count_field("optim.max_iters", [](auto& c) -> auto& { return c.optim.max_iters; }),
      string_field("data.train", [](auto& c) -> auto& { return c.train_source; }),
      string_field("data.val", [](auto& c) -> auto& { return c.val_source; }),
      double_field("data.sigma", [](auto& c) -> auto& { return c.sigma; }),
      {"data.scales",
       {[](RunConfig& c, const std::string& v) {
          c.scales.clear();
          for (const auto& s : split_list(v)) c.scales.push_back(static_cast<int>(to_count(s)));
        },
        [](const RunConfig& c) {
          std::vector<std::string> s;
          for (int f : c.scales) s.push_back(std::to_string(f));
          return join(s);
        }}},
      count_field("data.patch_size", [](auto& c) -> auto& { return c.sampling.patch_size; }),
      count_field("data.stride", [](auto& c) -> auto& { return c.sampling.stride; }),
      count_field("train.val_interval", [](auto& c) -> auto& { return c.val_interval; }),
      count_field("train.checkpoint_interval", [](auto& c) -> auto& { return c.checkpoint_interval; }),
      count_field("train.log_interval", [](auto& c) -> auto& { return c.log_interval; }),
      {"stability.variants",
       {[](RunConfig& c, const std::string& v) { c.stability_variants = split_list(v); },
        [](const RunConfig& c) { return join(c.stability_variants); }}},
      count_field("stability.window", [](auto& c) -> auto& { return c.stability_window; }),
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return &field;
  return nullptr;
}

}  // namespace

std::string to_string(Task task) {
  switch (task) {
    case Task::denoise: return "denoise";
    case Task::sr: return "sr";
    case Task::sr_blind: return "sr_blind";
  }
  return "?";
}

CorruptionSpec RunConfig::corruption() const {
  switch (task) {
    case Task::denoise: return CorruptionSpec::noise(sigma);
    case Task::sr: return CorruptionSpec{CorruptionSpec::Kind::sr, 0.0, scales};
    case Task::sr_blind: return CorruptionSpec::sr_blind(scales);
  }
  return {};
}

void RunConfig::validate() const {
  net.validate();
  optim.validate();
  if (task == Task::sr && scales.size() != 1)
    throw ConfigError("task sr needs exactly one entry in data.scales");
  corruption().validate();
  if (sampling.patch_size < net.largest_filter())
    throw ConfigError("data.patch_size is smaller than the largest filter");
  if (sampling.stride == 0) throw ConfigError("data.stride must be >= 1");
  if (stability_window < 2) throw ConfigError("stability.window must be >= 2");
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Field* field = find_field(key);
  if (field == nullptr) throw ConfigError("unknown config key '" + key + "'");
  try {
    field->set(config, value);
  } catch (const FieldError& e) {
    throw ConfigError("field '" + key + "': " + e.message);
  }
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig config;
  config.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::size_t> seen;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("line {}: expected 'key = value', got '{}'", number, line));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = find_field(key);
    if (field == nullptr) throw ConfigError(fmt::format("line {}: unknown key '{}'", number, key));
    if (const auto it = seen.find(key); it != seen.end())
      throw ConfigError(
          fmt::format("line {}: key '{}' already set on line {}", number, key, it->second));
    seen[key] = number;
    try {
      field->set(config, value);
    } catch (const FieldError& e) {
      throw ConfigError(fmt::format("line {}: field '{}': {}", number, key, e.message));
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.parent_path());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace rcnet
