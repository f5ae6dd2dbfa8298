#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noisychannel/core/types.h"

namespace nc {

// One line per entry:
//   <sentence_id> ||| <tokens> ||| <name>=<float> [<name>=<float> ...] ||| <total>
// Floats are written with 9 significant digits.
std::string format_nbest_line(const NBestEntry& entry);

// `line_number` is 1-based and only used in error messages.
NBestEntry parse_nbest_line(std::string_view line, std::size_t line_number);

std::vector<NBestEntry> read_nbest(std::istream& in);
std::vector<NBestEntry> read_nbest(const std::filesystem::path& path);
void write_nbest(std::ostream& out, std::span<const NBestEntry> entries);
void write_nbest(const std::filesystem::path& path, std::span<const NBestEntry> entries);

// Entries grouped by sentence id, groups in ascending id order, entry order
// within a group preserved.
std::vector<std::vector<NBestEntry>> group_by_sentence(std::span<const NBestEntry> entries);

std::string format_float(double value);

}  // namespace nc
