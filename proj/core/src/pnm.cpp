#include "lupi/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "lupi/errors.hpp"

namespace lupi::pnm {
namespace {

struct Header {
  int width = 0;
  int height = 0;
  std::size_t data_offset = 0;
};

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open raster '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::vector<unsigned char>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') {
    tok.push_back(static_cast<char>(buf[pos++]));
  }
  return tok;
}

int parse_int(const std::string& tok, const std::filesystem::path& path) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 9) {
    throw DataError("malformed raster header in '" + path.string() + "'");
  }
  return std::stoi(tok);
}

Header parse_header(const std::vector<unsigned char>& buf, const char* magic,
                    const std::filesystem::path& path) {
  std::size_t pos = 0;
  if (next_token(buf, pos) != magic) {
    throw DataError("'" + path.string() + "' is not a binary " + magic + " raster");
  }
  Header h;
  h.width = parse_int(next_token(buf, pos), path);
  h.height = parse_int(next_token(buf, pos), path);
  const int maxval = parse_int(next_token(buf, pos), path);
  if (maxval != 255) throw DataError("'" + path.string() + "': only maxval 255 is supported");
  if (h.width <= 0 || h.height <= 0) throw DataError("'" + path.string() + "': empty raster");
  // Exactly one whitespace byte separates the header from pixel data.
  h.data_offset = pos + 1;
  return h;
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
}

void write_bytes(const std::filesystem::path& path, const std::string& header,
                 const std::vector<unsigned char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write raster '" + path.string() + "'");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

}  // namespace

std::array<ImagePlane, 3> read_ppm(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const Header h = parse_header(buf, "P6", path);
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (buf.size() < h.data_offset + 3 * n) throw DataError("truncated raster '" + path.string() + "'");
  std::array<std::vector<double>, 3> ch;
  for (auto& c : ch) c.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) ch[c][i] = buf[h.data_offset + 3 * i + c];
  }
  return {ImagePlane(h.width, h.height, std::move(ch[0])),
          ImagePlane(h.width, h.height, std::move(ch[1])),
          ImagePlane(h.width, h.height, std::move(ch[2]))};
}

ImagePlane read_pgm(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const Header h = parse_header(buf, "P5", path);
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (buf.size() < h.data_offset + n) throw DataError("truncated raster '" + path.string() + "'");
  std::vector<double> v(buf.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                        buf.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
  return ImagePlane(h.width, h.height, std::move(v));
}

void write_ppm(const std::filesystem::path& path, const std::array<ImagePlane, 3>& planes) {
  const int w = planes[0].width();
  const int h = planes[0].height();
  for (const auto& p : planes) {
    if (p.width() != w || p.height() != h) throw DataError("ppm planes differ in size");
  }
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<unsigned char> data(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) data[3 * i + c] = to_byte(planes[c].values()[i]);
  }
  write_bytes(path, "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n", data);
}

void write_pgm(const std::filesystem::path& path, const ImagePlane& plane) {
  std::vector<unsigned char> data(plane.values().size());
  std::transform(plane.values().begin(), plane.values().end(), data.begin(), to_byte);
  write_bytes(path,
              "P5\n" + std::to_string(plane.width()) + " " + std::to_string(plane.height()) +
                  "\n255\n",
              data);
}

}  // namespace lupi::pnm
