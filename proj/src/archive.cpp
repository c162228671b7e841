#include "ramac/archive.hpp"

#include <cstring>
#include <fstream>

#include "ramac/errors.hpp"

namespace ramac {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'R', 'M', 'A', 'R'};
}

void Archive::save(const std::string& path) const {
  json header;
  header["version"] = "1";
  header["meta"] = meta;
  header["tensors"] = json::array();
  for (const auto& [name, m] : tensors)
    header["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("Archive::save: cannot open " + path);
  const std::string head = header.dump();
  const std::uint32_t len = static_cast<std::uint32_t>(head.size());
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, m] : tensors) {
    std::vector<double> buf(m.rows() * m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) buf[i * m.cols() + j] = m(i, j);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(double)));
  }
  if (!os) throw DataError("Archive::save: write failed for " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("Archive::load: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("Archive::load: bad magic");
  std::uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  if (!is) throw FormatError("Archive::load: truncated header length");
  std::string head(len, '\0');
  is.read(head.data(), len);
  if (!is) throw FormatError("Archive::load: truncated header");
  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw FormatError(std::string("Archive::load: malformed header: ") + e.what());
  }
  if (header.value("version", "") != "1") throw FormatError("Archive::load: unknown version");

  Archive a;
  a.meta = header.value("meta", json::object());
  for (const json& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const Eigen::Index rows = t.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = t.at("cols").get<Eigen::Index>();
    std::vector<double> buf(rows * cols);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!is) throw FormatError("Archive::load: truncated tensor " + name);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = buf[i * cols + j];
    a.tensors.emplace(name, std::move(m));
  }
  return a;
}

const Eigen::MatrixXd& Archive::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("Archive: missing tensor " + name);
  return it->second;
}

}  // namespace ramac
