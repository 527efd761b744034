#include "refine/writers.hpp"

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "refine/binary_io.hpp"
#include "refine/errors.hpp"

namespace refine {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading: " + std::strerror(errno));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return bytes;
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing: " + std::strerror(errno));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on '" + path + "'");
}

namespace {

int to_byte(double v) {
  if (!(v > 0)) return 0;
  return static_cast<int>(std::lround(std::min(v, 1.0) * 255.0));
}

}  // namespace

void write_ply(std::ostream& out, const OrientedPoints& points) {
  const Eigen::Index n = points.points.rows();
  const bool colored = points.colors.rows() == n && n > 0;
  out << "ply\nformat ascii 1.0\nelement vertex " << n << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property float nx\nproperty float ny\nproperty float nz\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  out.precision(7);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points.points.row(i);
    const auto& q = points.normals.row(i);
    out << p[0] << ' ' << p[1] << ' ' << p[2] << ' ' << q[0] << ' ' << q[1] << ' ' << q[2];
    for (int c = 0; c < 3; ++c) out << ' ' << (colored ? to_byte(points.colors(i, c)) : 200);
    out << '\n';
  }
}

void write_ply(const std::string& path, const OrientedPoints& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_ply(out, points);
  if (!out) throw IoError("write error on '" + path + "'");
}

void write_ppm(const std::string& path, const Image& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (Eigen::Index i = 0; i < image.rgb.rows(); ++i) {
    for (int c = 0; c < 3; ++c) bytes.push_back(static_cast<std::uint8_t>(to_byte(image.rgb(i, c))));
  }
  write_file_bytes(path, bytes);
}

Image read_ppm(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P6") throw IoError("'" + path + "' is not a binary PPM");
  Image img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw IoError("'" + path + "': only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw IoError("'" + path + "': malformed PPM header");
  }
  ++pos;
  const auto n = static_cast<Eigen::Index>(img.width) * img.height;
  if (img.width <= 0 || img.height <= 0 || bytes.size() - pos != static_cast<std::size_t>(n) * 3) {
    throw IoError("'" + path + "': pixel payload size mismatch");
  }
  img.rgb.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) img.rgb(i, c) = static_cast<float>(bytes[pos++]) / 255.0f;
  }
  img.mask.assign(static_cast<std::size_t>(n), 0);
  img.depth = Eigen::VectorXf::Zero(n);
  img.ray_count = static_cast<std::size_t>(n);
  return img;
}

}  // namespace refine
