#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "rcnet/data.hpp"

namespace rcnet {
namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(const std::vector<unsigned char>& bytes, std::size_t& pos,
                      const fs::path& path) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
    token.push_back(static_cast<char>(bytes[pos++]));
  if (token.empty()) throw IoError(path.string() + ": truncated PGM header");
  return token;
}

std::size_t parse_header_number(const std::string& token, const fs::path& path) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), ::isdigit))
    throw IoError(path.string() + ": malformed PGM header value '" + token + "'");
  return std::stoul(token);
}

GrayImage load_pgm(const std::vector<unsigned char>& bytes, const fs::path& path) {
  std::size_t pos = 0;
  if (pnm_token(bytes, pos, path) != "P5")
    throw IoError(path.string() + ": only binary PGM (P5) is supported");
  const std::size_t w = parse_header_number(pnm_token(bytes, pos, path), path);
  const std::size_t h = parse_header_number(pnm_token(bytes, pos, path), path);
  const std::size_t maxval = parse_header_number(pnm_token(bytes, pos, path), path);
  if (w == 0 || h == 0) throw IoError(path.string() + ": zero image dimension");
  if (maxval == 0 || maxval > 255)
    throw IoError(path.string() + ": unsupported PGM maxval " + std::to_string(maxval));
  ++pos;  // single whitespace byte before the raster
  if (bytes.size() < pos || bytes.size() - pos < w * h)
    throw IoError(path.string() + ": truncated PGM raster");
  GrayImage img(h, w);
  const double scale = 255.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < w * h; ++i) {
    const double v = bytes[pos + i];
    img.pixels[i] = maxval == 255 ? v : std::round(v * scale);
  }
  return img;
}

void save_pgm(const GrayImage& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raster(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    raster[i] = static_cast<unsigned char>(std::clamp(std::round(img.pixels[i]), 0.0, 255.0));
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

GrayImage load_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError(path.string() + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  const std::size_t channels = color ? 4 : 2;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(path.string() + ": " + msg);
  }
  GrayImage img(image.height, image.width);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const png_byte* px = &buffer[i * channels];
    img.pixels[i] =
        color ? std::round(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) : double(px[0]);
  }
  return img;
}

void save_png(const GrayImage& img, const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.w);
  image.height = static_cast<png_uint_32>(img.h);
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> raster(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    raster[i] = static_cast<png_byte>(std::clamp(std::round(img.pixels[i]), 0.0, 255.0));
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, raster.data(), 0, nullptr))
    throw IoError(path.string() + ": " + image.message);
}

}  // namespace

GrayImage::GrayImage(std::size_t height, std::size_t width, double fill)
    : h(height), w(width), pixels(height * width, fill) {}

GrayImage::GrayImage(std::size_t height, std::size_t width, std::vector<double> values)
    : h(height), w(width), pixels(std::move(values)) {
  if (pixels.size() != h * w) throw ShapeError("image buffer does not match its dimensions");
}

GrayImage load_image(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such image: " + path.string());
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return load_pgm(bytes, path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return load_png(path);
  throw IoError(path.string() + ": unsupported image format");
}

void save_image(const GrayImage& img, const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".pgm") return save_pgm(img, path);
  if (ext == ".png") return save_png(img, path);
  throw IoError(path.string() + ": unsupported output extension '" + ext + "'");
}

GrayImage clamp_pixels(const GrayImage& img, double lo, double hi) {
  GrayImage out = img;
  for (auto& v : out.pixels) v = std::clamp(v, lo, hi);
  return out;
}

GrayImage round_pixels(const GrayImage& img) {
  GrayImage out = img;
  for (auto& v : out.pixels) v = std::round(v);
  return out;
}

std::vector<fs::path> read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::vector<fs::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    fs::path p = line.substr(first, last - first + 1);
    paths.push_back(p.is_absolute() ? p : manifest.parent_path() / p);
  }
  return paths;
}

std::vector<fs::path> list_images(const fs::path& source) {
  if (!fs::is_directory(source)) return read_manifest(source);
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(source)) {
    const std::string ext = lower_extension(entry.path());
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".png")) paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

}  // namespace rcnet
