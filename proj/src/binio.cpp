#include "fedcov/binio.hpp"

#include <fstream>

namespace fedcov::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return data;
}

void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + p.string());
}

void write_file_atomic(const std::filesystem::path& p, std::span<const std::uint8_t> data) {
  std::filesystem::path tmp = p;
  tmp += ".tmp";
  write_file(tmp, data);
  std::filesystem::rename(tmp, p);
}

void save_matrix(const std::filesystem::path& p, const Eigen::MatrixXd& m) {
  ByteWriter w;
  w.matrix(m);
  write_file(p, w.buffer());
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& p) {
  auto data = read_file(p);
  ByteReader r(data);
  return r.matrix();
}

}  // namespace fedcov::io
