#include "qrambench/data_table.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace qrambench {

namespace {

bool is_csv(const std::filesystem::path& p) { return p.extension() == ".csv"; }

std::uint32_t word_mask(std::uint32_t k) { return k >= 32 ? ~0u : (1u << k) - 1; }

std::size_t record_bytes(std::uint32_t k) { return (k + 7) / 8; }

}  // namespace

DataTable::DataTable(const TreeShape& shape, std::vector<std::uint32_t> entries)
    : shape_(shape), entries_(std::move(entries)) {
  if (entries_.size() != shape.cells())
    throw DomainError("data table has " + std::to_string(entries_.size()) + " entries, expected " +
                      std::to_string(shape.cells()));
  const auto mask = word_mask(shape.k);
  for (auto v : entries_)
    if ((v & ~mask) != 0) throw DomainError("data table value exceeds k bits");
}

DataTable DataTable::zeros(const TreeShape& shape) {
  return DataTable(shape, std::vector<std::uint32_t>(shape.cells(), 0));
}

DataTable DataTable::random(const TreeShape& shape, Rng& rng) {
  std::vector<std::uint32_t> v(shape.cells());
  const auto mask = word_mask(shape.k);
  for (auto& x : v) x = static_cast<std::uint32_t>(rng()) & mask;
  return DataTable(shape, std::move(v));
}

DataTable DataTable::load(const std::filesystem::path& path, const TreeShape& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open data table '" + path.string() + "'");
  std::vector<std::uint32_t> v(shape.cells(), 0);
  if (is_csv(path)) {
    std::vector<bool> seen(v.size(), false);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      if (lineno == 1 && line.find_first_not_of("0123456789, \t\r") != std::string::npos) continue;  // header
      std::istringstream row(line);
      std::uint64_t addr = 0, value = 0;
      char comma = 0;
      if (!(row >> addr >> comma >> value) || comma != ',')
        throw DomainError("malformed data table row " + std::to_string(lineno));
      if (addr >= v.size()) throw DomainError("data table address out of range at row " + std::to_string(lineno));
      v[addr] = static_cast<std::uint32_t>(value);
      seen[addr] = true;
    }
    for (bool s : seen)
      if (!s) throw DomainError("data table is missing addresses");
  } else {
    const std::size_t rb = record_bytes(shape.k);
    std::vector<unsigned char> buf(rb);
    for (auto& x : v) {
      if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(rb)))
        throw DomainError("binary data table is shorter than 2^n records");
      std::uint64_t w = 0;
      for (std::size_t b = 0; b < rb; ++b) w |= std::uint64_t{buf[b]} << (8 * b);
      x = static_cast<std::uint32_t>(w);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DomainError("binary data table is longer than 2^n records");
  }
  return DataTable(shape, std::move(v));
}

void DataTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write data table '" + path.string() + "'");
  if (is_csv(path)) {
    out << "address,value\n";
    for (std::size_t a = 0; a < entries_.size(); ++a) out << a << ',' << entries_[a] << '\n';
  } else {
    const std::size_t rb = record_bytes(shape_.k);
    for (auto x : entries_)
      for (std::size_t b = 0; b < rb; ++b) out.put(static_cast<char>((x >> (8 * b)) & 0xFF));
  }
}

}  // namespace qrambench
