#include "noisychannel/core/nbest.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "noisychannel/core/error.h"
#include "noisychannel/core/vocabulary.h"

namespace nc {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] void malformed(std::size_t line_number) {
  throw DataError("malformed n-best line " + std::to_string(line_number));
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  // strtod accepts "inf"/"nan"; those are rejected below by the finiteness check.
  std::string buf(s);
  char* end = nullptr;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size();
}

}  // namespace

std::string format_float(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

std::string format_nbest_line(const NBestEntry& entry) {
  std::string line = std::to_string(entry.sentence_id);
  line += " ||| ";
  line += join_tokens(entry.tokens);
  line += " |||";
  for (const auto& [name, value] : entry.features) {
    line += ' ';
    line += name;
    line += '=';
    line += format_float(value);
  }
  line += " ||| ";
  line += format_float(entry.total);
  return line;
}

NBestEntry parse_nbest_line(std::string_view line, std::size_t line_number) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find("|||", start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 3;
  }
  if (fields.size() != 4) malformed(line_number);

  NBestEntry entry;
  std::string_view id_field = trim(fields[0]);
  auto [ptr, ec] =
      std::from_chars(id_field.data(), id_field.data() + id_field.size(), entry.sentence_id);
  if (ec != std::errc() || ptr != id_field.data() + id_field.size() || id_field.empty())
    malformed(line_number);

  entry.tokens = split_tokens(fields[1]);

  for (const auto& kv : split_tokens(fields[2])) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) malformed(line_number);
    double value = 0.0;
    if (!parse_double(std::string_view(kv).substr(eq + 1), value) || !std::isfinite(value))
      malformed(line_number);
    if (!entry.features.emplace(kv.substr(0, eq), value).second) malformed(line_number);
  }

  if (!parse_double(trim(fields[3]), entry.total)) malformed(line_number);
  return entry;
}

std::vector<NBestEntry> read_nbest(std::istream& in) {
  std::vector<NBestEntry> entries;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    entries.push_back(parse_nbest_line(line, line_number));
  }
  return entries;
}

std::vector<NBestEntry> read_nbest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open n-best file " + path.string());
  return read_nbest(in);
}

void write_nbest(std::ostream& out, std::span<const NBestEntry> entries) {
  for (const auto& e : entries) {
    for (const auto& [name, value] : e.features)
      if (!std::isfinite(value))
        throw DataError("non-finite feature '" + name + "' for sentence " +
                        std::to_string(e.sentence_id));
    out << format_nbest_line(e) << '\n';
  }
}

void write_nbest(const std::filesystem::path& path, std::span<const NBestEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write n-best file " + path.string());
  write_nbest(out, entries);
}

std::vector<std::vector<NBestEntry>> group_by_sentence(std::span<const NBestEntry> entries) {
  std::map<std::int64_t, std::vector<NBestEntry>> groups;
  for (const auto& e : entries) groups[e.sentence_id].push_back(e);
  std::vector<std::vector<NBestEntry>> out;
  out.reserve(groups.size());
  for (auto& [id, group] : groups) out.push_back(std::move(group));
  return out;
}

}  // namespace nc
