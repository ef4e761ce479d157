#include "config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flk/error.hpp"

namespace flk::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw ParseError("config line " + std::to_string(line) + ": " + what);
}

double to_double(std::string_view v, std::size_t line, std::string_view key) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    fail(line, "'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_uint(std::string_view v, std::size_t line, std::string_view key) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    fail(line, "'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> items;
  while (true) {
    const auto comma = v.find(',');
    items.push_back(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return items;
}

std::vector<std::size_t> to_sizes(std::string_view v, std::size_t line, std::string_view key) {
  std::vector<std::size_t> out;
  for (auto item : split_list(v)) out.push_back(static_cast<std::size_t>(to_uint(item, line, key)));
  return out;
}

}  // namespace

CliConfig parse_config(std::string_view text) {
  CliConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (value.empty()) fail(line_no, "empty value for '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) fail(line_no, "duplicate key '" + std::string(key) + "'");

    if (key == "ac_frequency") {
      cfg.flicker.ac_frequency = to_double(value, line_no, key);
    } else if (key == "gamma_w") {
      cfg.flicker.gamma_w = to_double(value, line_no, key);
    } else if (key == "exposure_time") {
      cfg.flicker.exposure_time = to_double(value, line_no, key);
    } else if (key == "row_readout_time") {
      cfg.flicker.row_readout_time = to_double(value, line_no, key);
    } else if (key == "phases") {
      const auto items = split_list(value);
      if (items.size() != 3) fail(line_no, "'phases' expects three comma-separated values");
      for (std::size_t i = 0; i < 3; ++i) cfg.flicker.phase_offsets[i] = to_double(items[i], line_no, key);
    } else if (key == "orientation") {
      if (value == "horizontal") {
        cfg.flicker.orientation = StripeOrientation::kHorizontal;
      } else if (value == "vertical") {
        cfg.flicker.orientation = StripeOrientation::kVertical;
      } else {
        fail(line_no, "'orientation' must be horizontal or vertical, got '" + std::string(value) + "'");
      }
    } else if (key == "model.channels") {
      cfg.model.channels = to_sizes(value, line_no, key);
    } else if (key == "model.blocks") {
      cfg.model.blocks = to_sizes(value, line_no, key);
    } else if (key == "model.heads") {
      cfg.model.heads = to_sizes(value, line_no, key);
    } else if (key == "model.window") {
      cfg.model.window = static_cast<std::size_t>(to_uint(value, line_no, key));
    } else if (key == "model.gamma") {
      cfg.model.gamma = to_double(value, line_no, key);
    } else if (key == "train.lr") {
      cfg.train.adam.lr = to_double(value, line_no, key);
    } else if (key == "train.steps") {
      cfg.train.steps = static_cast<std::size_t>(to_uint(value, line_no, key));
    } else if (key == "seed") {
      cfg.seed = to_uint(value, line_no, key);
    } else {
      fail(line_no, "unknown key '" + std::string(key) + "'");
    }
  }
  try {
    cfg.flicker.validate();
    cfg.model.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (cfg.train.adam.lr < 0.0) throw ParseError("config: train.lr must be non-negative");
  cfg.train.seed = cfg.seed;
  return cfg;
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace flk::cli
