#include "rcnet/commands.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "rcnet/checkpoint.hpp"

namespace rcnet {
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".pgm" || ext == ".png";
}

std::vector<fs::path> input_images(const fs::path& p) {
  if (fs::is_regular_file(p) && has_image_extension(p)) return {p};
  if (!fs::exists(p)) throw IoError("no such input: " + p.string());
  return list_images(p);
}

struct LoadedImages {
  std::vector<GrayImage> images;
  std::vector<std::string> ids;
};

LoadedImages load_images(const fs::path& source) {
  LoadedImages out;
  for (const auto& p : input_images(source)) {
    out.images.push_back(load_image(p));
    out.ids.push_back(p.stem().string());
  }
  if (out.images.empty()) throw Error("dataset " + source.string() + " is empty");
  return out;
}

TrainData load_training_data(const RunConfig& config) {
  if (config.train_source.empty()) throw ConfigError("data.train is not set");
  const auto train = load_images(config.resolve(config.train_source));
  TrainData data;
  data.sampling = config.sampling;
  const auto corruption = config.corruption();
  for (std::size_t i = 0; i < train.images.size(); ++i)
    data.sources.push_back(make_patch_source(train.images[i], train.ids[i], corruption));
  if (!config.val_source.empty()) {
    const auto val = load_images(config.resolve(config.val_source));
    data.validation =
        make_eval_pairs(val.images, val.ids, corruption, derive_seed(config.seed, 0x7a11da7e));
  }
  return data;
}

template <typename F>
decltype(auto) with_precision(Precision p, F&& f) {
  if (p == Precision::single) return f(float{});
  return f(double{});
}

template <typename T>
TrainOutcome train_impl(const RunConfig& config, std::ostream& progress) {
  const TrainData data = load_training_data(config);
  const fs::path out_dir = config.out_dir;
  ensure_dir(out_dir);
  write_text(out_dir / "config.cfg", serialize_config(config));

  Network<T> net = Network<T>::build(config.net, config.seed);
  SGDState<T> state;
  TrainOptions options;
  options.seed = config.seed;
  options.val_interval = config.val_interval;
  options.on_log = [&](const LogEntry& e) {
    const bool periodic = config.log_interval > 0 && e.iter % config.log_interval == 0;
    if (!periodic && !e.val_loss && e.iter != config.optim.max_iters) return;
    progress << fmt::format("iter={} lr={:.6g} loss={:.6g}", e.iter, e.lr, e.train_loss);
    if (e.val_loss) progress << fmt::format(" val_loss={:.6g} val_psnr={:.4f}", *e.val_loss, *e.val_psnr);
    progress << std::endl;
  };
  options.checkpoint_interval = config.checkpoint_interval;
  options.on_checkpoint = [&](std::size_t iter) {
    save_checkpoint(out_dir / fmt::format("checkpoint_{}.rcn", iter), config, iter, net, &state);
  };

  TrainOutcome outcome;
  outcome.log = train(net, data, config.optim, options, state);
  outcome.checkpoint = out_dir / "checkpoint_final.rcn";
  save_checkpoint(outcome.checkpoint, config, state.iteration, net, &state);
  outcome.log_csv = out_dir / "train_log.csv";
  write_text(outcome.log_csv, outcome.log.to_csv());
  return outcome;
}

struct RestoreItem {
  std::string id;
  GrayImage input;
  std::optional<GrayImage> clean;
};

template <typename T>
RestoreOutcome restore_items(const Network<T>& net, const std::vector<RestoreItem>& items,
                             const fs::path& out_dir, std::ostream& out) {
  ensure_dir(out_dir);
  RestoreOutcome outcome;
  QualityReport restored, baseline;
  bool all_referenced = true;
  for (const auto& item : items) {
    const auto t0 = std::chrono::steady_clock::now();
    // Scored exactly as written: clamped and rounded to 8 bits.
    const GrayImage prediction = round_pixels(restore(net, item.input));
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path path = out_dir / (item.id + "_restored.png");
    save_image(prediction, path);
    outcome.outputs.push_back(path);
    if (!item.clean) {
      all_referenced = false;
      out << fmt::format("{}: restored in {:.3f}s -> {}\n", item.id, seconds, path.string());
      continue;
    }
    const GrayImage input = clamp_pixels(item.input);
    restored.entries.push_back(
        {item.id, psnr(prediction, *item.clean), ssim(prediction, *item.clean), seconds});
    baseline.entries.push_back({item.id, psnr(input, *item.clean), ssim(input, *item.clean), 0.0});
    out << fmt::format("{}: input {:.2f} dB / {:.4f} -> restored {:.2f} dB / {:.4f} ({:.3f}s)\n",
                       item.id, baseline.entries.back().psnr_db, baseline.entries.back().ssim,
                       restored.entries.back().psnr_db, restored.entries.back().ssim, seconds);
  }
  if (all_referenced && !items.empty()) {
    write_text(out_dir / "report.csv", restored.to_csv());
    write_text(out_dir / "baseline.csv", baseline.to_csv());
    const std::vector<std::string> labels{"input", "restored"};
    const std::vector<QualityReport> reports{baseline, restored};
    write_text(out_dir / "summary.md", quality_markdown(labels, reports));
    out << fmt::format("mean: input {:.2f} dB / {:.4f} -> restored {:.2f} dB / {:.4f}\n",
                       baseline.mean_psnr(), baseline.mean_ssim(), restored.mean_psnr(),
                       restored.mean_ssim());
    outcome.restored = std::move(restored);
    outcome.baseline = std::move(baseline);
  }
  return outcome;
}

RestoreOutcome restore_with(const AnyCheckpoint& checkpoint, const std::vector<RestoreItem>& items,
                            const fs::path& out_dir, std::ostream& out) {
  return std::visit([&](const auto& ck) { return restore_items(ck.net, items, out_dir, out); },
                    checkpoint);
}

const RunConfig& config_of(const AnyCheckpoint& ck) {
  return std::visit([](const auto& c) -> const RunConfig& { return c.config; }, ck);
}

void attach_references(std::vector<RestoreItem>& items, const RestoreRequest& request) {
  if (!request.reference) return;
  const auto refs = load_images(*request.reference);
  if (refs.images.size() != items.size())
    throw Error(fmt::format("{} reference images for {} inputs", refs.images.size(), items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (refs.images[i].h != items[i].input.h || refs.images[i].w != items[i].input.w)
      throw ShapeError("reference " + refs.ids[i] + " does not match the size of " + items[i].id);
    items[i].clean = refs.images[i];
  }
}

}  // namespace

TrainOutcome cmd_train(const RunConfig& config, std::ostream& progress) {
  config.validate();
  for (const auto& w : config.net.validate()) progress << "warning: " << w << "\n";
  return with_precision(config.precision,
                        [&]<typename T>(T) { return train_impl<T>(config, progress); });
}

RestoreOutcome cmd_denoise(const RestoreRequest& request, std::ostream& out) {
  const AnyCheckpoint ck = load_checkpoint(request.checkpoint);
  if (config_of(ck).task != Task::denoise)
    throw ConfigError("checkpoint was trained for task " + to_string(config_of(ck).task) +
                      ", not denoise");
  const auto inputs = load_images(request.input);
  std::vector<RestoreItem> items;
  for (std::size_t i = 0; i < inputs.images.size(); ++i) {
    if (request.sigma) {
      // Inputs are clean: corrupt them first and score against the originals.
      items.push_back({inputs.ids[i],
                       add_gaussian_noise(inputs.images[i], *request.sigma,
                                          derive_seed(request.seed, i, 0xe7a1)),
                       inputs.images[i]});
    } else {
      items.push_back({inputs.ids[i], inputs.images[i], std::nullopt});
    }
  }
  if (!request.sigma) attach_references(items, request);
  return restore_with(ck, items, request.out_dir, out);
}

RestoreOutcome cmd_superres(const RestoreRequest& request, std::ostream& out) {
  const AnyCheckpoint ck = load_checkpoint(request.checkpoint);
  const RunConfig& config = config_of(ck);
  if (config.task == Task::denoise)
    throw ConfigError("checkpoint was trained for denoising, not super-resolution");
  const int factor = request.factor.value_or(config.scales.front());
  if (factor < 2 || factor > 4)
    throw ConfigError("scale factor must be 2, 3 or 4, got " + std::to_string(factor));
  const auto inputs = load_images(request.input);
  std::vector<RestoreItem> items;
  for (std::size_t i = 0; i < inputs.images.size(); ++i) {
    if (request.degrade) {
      SrPair pair = make_sr_pair(inputs.images[i], factor);
      items.push_back({inputs.ids[i], std::move(pair.corrupted), std::move(pair.clean)});
    } else {
      const auto& lr = inputs.images[i];
      const auto f = static_cast<std::size_t>(factor);
      items.push_back({inputs.ids[i], bicubic_resize(lr, lr.h * f, lr.w * f), std::nullopt});
    }
  }
  if (!request.degrade) attach_references(items, request);
  return restore_with(ck, items, request.out_dir, out);
}

RestoreOutcome cmd_evaluate(const RestoreRequest& request, std::ostream& out) {
  const AnyCheckpoint ck = load_checkpoint(request.checkpoint);
  const RunConfig& config = config_of(ck);
  auto clean = load_images(request.input);
  if (request.resize)
    for (auto& img : clean.images)
      img = round_pixels(clamp_pixels(bicubic_resize(img, request.resize->first, request.resize->second)));
  CorruptionSpec spec = config.corruption();
  if (request.sigma) spec = CorruptionSpec::noise(*request.sigma);
  if (request.factor) spec = CorruptionSpec::sr(*request.factor);
  std::vector<RestoreItem> items;
  for (auto& p : make_eval_pairs(clean.images, clean.ids, spec, request.seed))
    items.push_back({p.id, std::move(p.corrupted), std::move(p.clean)});
  return restore_with(ck, items, request.out_dir, out);
}

std::string cmd_inspect(const fs::path& path) {
  std::ostringstream os;
  if (is_checkpoint_file(path)) {
    AnyCheckpoint ck = load_checkpoint(path);
    std::visit(
        [&](auto& c) {
          os << fmt::format("checkpoint: task={} precision={} iteration={}\n",
                            to_string(c.config.task), to_string(c.config.precision), c.iteration);
          os << c.net.summarize().to_text();
        },
        ck);
    return os.str();
  }
  const RunConfig config = load_config(path);
  for (const auto& w : config.net.validate()) os << "warning: " << w << "\n";
  const auto net = Network<float>::build(config.net, config.seed);
  const auto report = net.summarize();
  os << fmt::format("model: {} n_dense={} k_dense={} blocks={} width={} k_large={} k_small={} "
                    "use_bn={} remove_second_dense={}\n",
                    to_string(config.net.kind), config.net.n_dense, config.net.k_dense,
                    config.net.num_blocks, config.net.block.width, config.net.block.k_large,
                    config.net.block.k_small, config.net.use_bn, config.net.remove_second_dense);
  os << report.to_text();
  os << fmt::format("total: {:.2f}M parameters\n", report.total_params / 1e6);
  return os.str();
}

NetConfig apply_variant(NetConfig base, const std::string& variant) {
  if (variant == "rcnet") {
    base.kind = NetKind::rcnet;
  } else if (variant == "win") {
    base.kind = NetKind::win;
  } else if (variant == "no_second_dense") {
    base.kind = NetKind::rcnet;
    base.remove_second_dense = true;
  } else if (variant.rfind("blocks=", 0) == 0) {
    base.kind = NetKind::rcnet;
    try {
      base.num_blocks = std::stoul(variant.substr(7));
    } catch (const std::logic_error&) {
      throw ConfigError("bad variant '" + variant + "'");
    }
  } else {
    throw ConfigError("unknown variant '" + variant + "' (expected rcnet, win, no_second_dense or blocks=<n>)");
  }
  return base;
}

StabilityOutcome cmd_stability(const RunConfig& config, std::ostream& progress) {
  if (config.stability_variants.size() < 2)
    throw ConfigError("stability needs at least two variants");
  const fs::path out_dir = config.out_dir;
  ensure_dir(out_dir);
  StabilityOutcome outcome;
  for (const auto& variant : config.stability_variants) {
    RunConfig run = config;
    run.net = apply_variant(config.net, variant);
    run.out_dir = (out_dir / variant).string();
    run.checkpoint_interval = 0;
    progress << "== " << variant << "\n";
    TrainOutcome t = cmd_train(run, progress);
    write_text(out_dir / ("log_" + variant + ".csv"), t.log.to_csv());
    const auto losses = t.log.train_losses();
    outcome.rolling.push_back(rolling_std(losses, config.stability_window));
    outcome.variants.push_back(variant);
    outcome.logs.push_back(std::move(t.log));
  }

  std::ostringstream csv;
  csv << "iter";
  for (const auto& v : outcome.variants) csv << ',' << v;
  csv << '\n';
  const std::size_t rows = outcome.rolling.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    csv << outcome.logs.front().entries[r + config.stability_window - 1].iter;
    for (const auto& series : outcome.rolling) csv << ',' << fmt::format("{:.9g}", series[r]);
    csv << '\n';
  }
  outcome.rolling_csv = out_dir / "rolling_std.csv";
  write_text(outcome.rolling_csv, csv.str());

  // Mean rolling deviation once the first fifth of training has passed.
  const std::size_t warmup = rows / 5;
  std::ostringstream md;
  md << "| variant | final train loss | mean rolling std (after warmup) |\n|---|---|---|\n";
  std::vector<double> means;
  for (std::size_t i = 0; i < outcome.variants.size(); ++i) {
    const auto& s = outcome.rolling[i];
    double m = 0.0;
    for (std::size_t r = warmup; r < s.size(); ++r) m += s[r];
    m /= static_cast<double>(s.size() - warmup);
    means.push_back(m);
    md << fmt::format("| {} | {:.6g} | {:.6g} |\n", outcome.variants[i],
                      outcome.logs[i].entries.back().train_loss, m);
  }
  const auto find = [&](const std::string& name) {
    return std::find(outcome.variants.begin(), outcome.variants.end(), name) -
           outcome.variants.begin();
  };
  const auto rc = static_cast<std::size_t>(find("rcnet"));
  const auto win = static_cast<std::size_t>(find("win"));
  if (rc < means.size() && win < means.size())
    md << fmt::format("\nExpectation (RC-Net fluctuates less than WIN after warmup): {} "
                      "(rcnet {:.6g} vs win {:.6g}, window {}, warmup {} rows)\n",
                      means[rc] < means[win] ? "observed" : "not observed", means[rc], means[win],
                      config.stability_window, warmup);
  outcome.summary = md.str();
  write_text(out_dir / "summary.md", outcome.summary);
  progress << outcome.summary;
  return outcome;
}

fs::path cmd_synth(const fs::path& out_dir, std::size_t count, std::size_t h, std::size_t w,
                   std::uint64_t seed, const std::string& prefix) {
  if (count == 0) throw ConfigError("synth: count must be >= 1");
  ensure_dir(out_dir);
  std::string manifest = "# synthetic images, seed " + std::to_string(seed) + "\n";
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = fmt::format("{}_{:03}.pgm", prefix, i);
    save_image(synthetic_image(h, w, derive_seed(seed, i, 0x5e7)), out_dir / name);
    manifest += name + "\n";
  }
  const fs::path path = out_dir / (prefix + ".txt");
  write_text(path, manifest);
  return path;
}

namespace {

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
  } catch (const std::logic_error&) {
    throw ConfigError("expected a size like 321x481, got '" + s + "'");
  }
}

struct RunOverrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> iters;
  std::optional<std::string> precision;
  std::optional<std::string> variants;
  std::optional<std::size_t> window;
  std::vector<std::string> sets;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "Run config file")->required();
    app.add_option("--seed", seed, "Override the run seed");
    app.add_option("--out", out, "Override the output directory");
    app.add_option("--iters", iters, "Override optim.max_iters");
    app.add_option("--precision", precision, "single or double");
    app.add_option("--set", sets, "Override any config key (key=value)");
  }

  RunConfig resolve() const {
    RunConfig c = load_config(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) c.seed = *seed;
    if (out) c.out_dir = *out;
    if (iters) c.optim.max_iters = *iters;
    if (precision) set_config_value(c, "precision", *precision);
    if (variants) set_config_value(c, "stability.variants", *variants);
    if (window) c.stability_window = *window;
    return c;
  }
};

struct RestoreFlags {
  RestoreRequest request;
  std::string reference;
  std::string resize;
  std::optional<double> sigma;
  std::optional<int> factor;

  void add_to(CLI::App& app, bool with_sigma, bool with_factor, bool with_reference) {
    app.add_option("--checkpoint", request.checkpoint, "RCN1 checkpoint")->required();
    app.add_option("--input", request.input, "Image, manifest or directory")->required();
    app.add_option("--out", request.out_dir, "Output directory")->required();
    app.add_option("--seed", request.seed, "Seed for synthetic corruption");
    if (with_reference) app.add_option("--reference", reference, "Clean reference images");
    if (with_sigma) app.add_option("--sigma", sigma, "Corrupt clean inputs with this noise level");
    if (with_factor) app.add_option("--factor", factor, "Scale factor (2, 3 or 4)");
  }

  RestoreRequest resolve() const {
    RestoreRequest r = request;
    if (!reference.empty()) r.reference = reference;
    if (!resize.empty()) r.resize = parse_size(resize);
    r.sigma = sigma;
    r.factor = factor;
    return r;
  }
};

std::string one_line(std::string msg) {
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  return msg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"RC-Net image restoration: training, inference and experiment harnesses", "rcnet"};
  app.require_subcommand(0, 1);

  RunOverrides train_flags, stability_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a network from a run config");
  train_flags.add_to(*train_cmd);

  auto* stability_cmd = app.add_subcommand("stability", "Train several variants on one data stream");
  stability_flags.add_to(*stability_cmd);
  stability_cmd->add_option("--variants", stability_flags.variants, "Comma-separated variants");
  stability_cmd->add_option("--window", stability_flags.window, "Rolling-std window");

  RestoreFlags denoise_flags, superres_flags, evaluate_flags;
  auto* denoise_cmd = app.add_subcommand("denoise", "Denoise images with a checkpoint");
  denoise_flags.add_to(*denoise_cmd, true, false, true);
  auto* superres_cmd = app.add_subcommand("superres", "Super-resolve images with a checkpoint");
  superres_flags.add_to(*superres_cmd, false, true, true);
  superres_cmd->add_flag("--degrade", superres_flags.request.degrade,
                         "Treat inputs as high-resolution and degrade them first");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Corrupt clean images, restore and score");
  evaluate_flags.add_to(*evaluate_cmd, true, true, false);
  evaluate_cmd->add_option("--resize", evaluate_flags.resize, "Resize clean images to HxW first");

  std::string inspect_config, inspect_checkpoint;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print the layer table and parameter count");
  auto* ic = inspect_cmd->add_option("--config", inspect_config, "Run config file");
  auto* ik = inspect_cmd->add_option("--checkpoint", inspect_checkpoint, "RCN1 checkpoint");
  ic->excludes(ik);
  inspect_cmd->require_option(1);

  std::string synth_out, synth_size = "128x128", synth_prefix = "synthetic";
  std::size_t synth_count = 10;
  std::uint64_t synth_seed = 1;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic grayscale image set");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--count", synth_count, "Number of images");
  synth_cmd->add_option("--size", synth_size, "Image size HxW");
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");
  synth_cmd->add_option("--prefix", synth_prefix, "File and manifest prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }
  if (app.get_subcommands().empty()) {
    err << "error: a command is required: train, stability, denoise, superres, evaluate, inspect "
           "or synth (see --help)\n";
    return static_cast<int>(CLI::ExitCodes::RequiredError);
  }

  try {
    if (train_cmd->parsed()) {
      const auto outcome = cmd_train(train_flags.resolve(), out);
      out << "checkpoint: " << outcome.checkpoint.string() << "\n";
    } else if (stability_cmd->parsed()) {
      const auto outcome = cmd_stability(stability_flags.resolve(), out);
      out << "rolling std: " << outcome.rolling_csv.string() << "\n";
    } else if (denoise_cmd->parsed()) {
      cmd_denoise(denoise_flags.resolve(), out);
    } else if (superres_cmd->parsed()) {
      cmd_superres(superres_flags.resolve(), out);
    } else if (evaluate_cmd->parsed()) {
      cmd_evaluate(evaluate_flags.resolve(), out);
    } else if (inspect_cmd->parsed()) {
      out << cmd_inspect(inspect_config.empty() ? inspect_checkpoint : inspect_config);
    } else if (synth_cmd->parsed()) {
      const auto [h, w] = parse_size(synth_size);
      out << "manifest: " << cmd_synth(synth_out, synth_count, h, w, synth_seed, synth_prefix).string()
          << "\n";
    }
  } catch (const DivergenceError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rcnet
