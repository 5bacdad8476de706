#include "triaan/npy.hpp"

#include "triaan/binary_io.hpp"

#include <regex>

namespace triaan {

void write_npy(const std::filesystem::path& path, const Mat& m) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                       std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + "), }";
  // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of 64
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  binio::Writer w(path);
  w.bytes("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  w.bytes(&len, 2);
  w.bytes(header.data(), header.size());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  w.bytes(rm.data(), static_cast<std::size_t>(rm.size()) * sizeof(double));
  w.finish();
}

Mat read_npy(const std::filesystem::path& path) {
  binio::Reader r(path);
  char magic[6];
  r.bytes(magic, 6);
  if (std::string(magic, 6) != "\x93NUMPY") throw IoError("not a .npy file: " + path.string());
  unsigned char version[2];
  r.bytes(version, 2);
  std::size_t header_len = 0;
  if (version[0] == 1) {
    std::uint16_t n;
    r.bytes(&n, 2);
    header_len = n;
  } else {
    header_len = r.u32();
  }
  std::string header(header_len, ' ');
  r.bytes(header.data(), header_len);

  std::smatch match;
  if (!std::regex_search(header, match, std::regex("'descr':\\s*'([<|=]?)(f[48])'")))
    throw IoError("unsupported .npy dtype in " + path.string());
  const bool f32 = match[2] == "f4";
  const bool fortran = header.find("'fortran_order': True") != std::string::npos;
  if (!std::regex_search(header, match, std::regex("'shape':\\s*\\(([^)]*)\\)")))
    throw IoError("missing .npy shape in " + path.string());
  std::vector<Eigen::Index> dims;
  const std::string shape = match[1];
  const std::regex digits("\\d+");
  std::sregex_iterator it(shape.begin(), shape.end(), digits), end;
  for (; it != end; ++it) dims.push_back(std::stoll(it->str()));
  if (dims.empty() || dims.size() > 2) throw IoError("only 1-D/2-D .npy supported: " + path.string());
  const Eigen::Index rows = dims.size() == 1 ? 1 : dims[0];
  const Eigen::Index cols = dims.size() == 1 ? dims[0] : dims[1];

  std::vector<double> flat(static_cast<std::size_t>(rows * cols));
  for (double& v : flat) {
    if (f32) {
      float f;
      r.bytes(&f, 4);
      v = f;
    } else {
      v = r.f64();
    }
  }
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = fortran ? flat[static_cast<std::size_t>(j * rows + i)]
                        : flat[static_cast<std::size_t>(i * cols + j)];
  return m;
}

}  // namespace triaan
