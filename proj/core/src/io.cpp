#include "uspil/io.hpp"

#include <cstdio>
#include <sstream>

#include "json_io.hpp"
#include "uspil/errors.hpp"

namespace uspil {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& file,
                     std::span<const std::string> header) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  out_.open(file);
  if (!out_) throw NumericError("cannot open for writing: " + file.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::write_row(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ << ',';
    out_ << format_g17(values[i]);
  }
  out_ << '\n';
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ConfigError("csv column not found: " + name);
}

std::vector<double> CsvTable::col(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r[c]);
  return v;
}

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open csv: " + file.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty csv: " + file.string());
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(t.header.size());
    std::stringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str())
        throw ConfigError("non-numeric csv cell '" + cell + "' in " + file.string());
      row.push_back(v);
    }
    if (row.size() != t.header.size())
      throw ConfigError("ragged csv row in " + file.string());
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const std::filesystem::path& file,
               std::span<const std::string> header,
               const std::vector<std::vector<double>>& rows) {
  CsvWriter w(file, header);
  for (const auto& r : rows) w.write_row(r);
}

namespace detail {

namespace {
void dump_rec(const nlohmann::ordered_json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case nlohmann::ordered_json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      std::size_t i = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        out += pad_in;
        out += nlohmann::ordered_json(it.key()).dump();
        out += ": ";
        dump_rec(it.value(), out, indent + 1);
        if (i + 1 < j.size()) out += ',';
        out += '\n';
      }
      out += pad + "}";
      break;
    }
    case nlohmann::ordered_json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        out += pad_in;
        dump_rec(j[i], out, indent + 1);
        if (i + 1 < j.size()) out += ',';
        out += '\n';
      }
      out += pad + "]";
      break;
    }
    case nlohmann::ordered_json::value_t::number_float:
      out += format_g17(j.get<double>());
      break;
    default:
      out += j.dump();
  }
}
}  // namespace

std::string dump_g17(const nlohmann::ordered_json& j) {
  std::string out;
  dump_rec(j, out, 0);
  out += '\n';
  return out;
}

void write_json_file(const nlohmann::ordered_json& j, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw NumericError("cannot open for writing: " + file.string());
  out << dump_g17(j);
}

nlohmann::ordered_json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open json: " + file.string());
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::ordered_json::parse_error& e) {
    throw ConfigError("json parse error in " + file.string() + " at byte " +
                      std::to_string(e.byte) + ": " + e.what());
  }
}

}  // namespace detail
}  // namespace uspil
