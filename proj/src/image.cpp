#include "himatch/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "himatch/error.hpp"

namespace himatch {

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out = Image::zeros(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                     0.114 * img.at(x, y, 2);
  return out;
}

Image downsample(const Image& img, int factor) {
  if (factor == 1) return img;
  const int ow = img.width / factor;
  const int oh = img.height / factor;
  if (ow == 0 || oh == 0)
    throw EmptyOutput("downsample: " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " by " + std::to_string(factor) +
                      " leaves no pixels");
  Image out = Image::zeros(ow, oh, img.channels);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            sum += img.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = sum * inv;
      }
  return out;
}

namespace {

// Next whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::string& what, const std::string& path) {
  if (tok.empty()) throw TruncatedFile(path + ": missing " + what);
  try {
    const long v = std::stol(tok);
    if (v <= 0 || v > 1 << 20) throw DimOverflow(path + ": bad " + what + " " + tok);
    return static_cast<int>(v);
  } catch (const std::logic_error&) {
    throw TruncatedFile(path + ": unreadable " + what + " '" + tok + "'");
  }
}

}  // namespace

Image load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw BadMagic(path + ": expected P5 or P6, got '" + magic + "'");

  const int w = parse_dim(next_token(in), "width", path);
  const int h = parse_dim(next_token(in), "height", path);
  const int maxval = parse_dim(next_token(in), "maxval", path);
  if (maxval != 255) throw BadMagic(path + ": only 8-bit maxval 255 supported");
  // The maxval is followed by exactly one whitespace byte, already consumed
  // by the tokenizer.

  Image img = Image::zeros(w, h, channels);
  std::vector<std::uint8_t> raw(img.data.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw TruncatedFile(path + ": expected " + std::to_string(raw.size()) +
                        " pixel bytes, got " + std::to_string(in.gcount()));
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
  return img;
}

void save_pnm(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw DimMismatch("save_pnm: " + std::to_string(img.channels) + " channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> raw(img.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(img.data[i], 0.0, 1.0);
    raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace himatch
