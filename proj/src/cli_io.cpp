#include "parkbench/cli_io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "parkbench/errors.hpp"

namespace parkbench {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", no);
    if (!out.emplace(key, value).second) throw ParseError("duplicate key '" + key + "'", no);
  }
  return out;
}

std::map<std::string, std::string> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::optional<std::string> Settings::from_file(const std::string& key) const {
  read_[key] = true;
  const auto it = file_.find(key);
  if (it == file_.end()) return std::nullopt;
  return it->second;
}

int Settings::get_int(const std::string& key, std::optional<int> cli, int def) const {
  const auto f = from_file(key);
  if (cli) return *cli;
  if (!f) return def;
  int v = 0;
  const auto [p, ec] = std::from_chars(f->data(), f->data() + f->size(), v);
  if (ec != std::errc() || p != f->data() + f->size()) {
    throw ConfigError("config key '" + key + "': not an integer: " + *f);
  }
  return v;
}

double Settings::get_double(const std::string& key, std::optional<double> cli, double def) const {
  const auto f = from_file(key);
  if (cli) return *cli;
  if (!f) return def;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(f->c_str(), &end);
  if (end != f->c_str() + f->size() || f->empty() || errno != 0) {
    throw ConfigError("config key '" + key + "': not a number: " + *f);
  }
  return v;
}

std::string Settings::get_string(const std::string& key, std::optional<std::string> cli,
                                 const std::string& def) const {
  const auto f = from_file(key);
  if (cli) return *cli;
  return f ? *f : def;
}

bool Settings::get_bool(const std::string& key, std::optional<bool> cli, bool def) const {
  const auto f = from_file(key);
  if (cli) return *cli;
  if (!f) return def;
  if (*f == "true" || *f == "1") return true;
  if (*f == "false" || *f == "0") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + *f);
}

std::uint64_t Settings::seed(std::optional<std::uint64_t> cli, std::uint64_t def) const {
  const auto f = from_file("seed");
  if (cli) return *cli;
  auto parse = [](const std::string& s, const char* where) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
      throw ConfigError(std::string(where) + ": not an unsigned integer: " + s);
    }
    return v;
  };
  if (const char* env = std::getenv("PARKBENCH_SEED")) return parse(env, "PARKBENCH_SEED");
  if (f) return parse(*f, "config key 'seed'");
  return def;
}

std::vector<std::string> Settings::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : file_) {
    if (!read_.count(k)) out.push_back(k);
  }
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["tool_version"] = kToolVersion;
  j["seed"] = m.seed;
  j["config"] = m.config;
  auto files = [](const std::vector<fs::path>& paths) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : paths) {
      nlohmann::ordered_json e;
      e["path"] = p.string();
      e["fnv1a"] = fs::is_regular_file(p) ? nlohmann::ordered_json(fnv1a_hex(read_text(p)))
                                          : nlohmann::ordered_json();
      arr.push_back(e);
    }
    return arr;
  };
  j["inputs"] = files(m.inputs);
  j["outputs"] = files(m.outputs);
  std::time_t t = 0;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  j["wall_clock"] = buf;
  return j.dump(2) + "\n";
}

std::string prediction_to_line(const PredictionRecord& p) {
  nlohmann::ordered_json j;
  j["scenario_id"] = p.scenario_id;
  j["frame_index"] = p.frame_index;
  nlohmann::ordered_json wp = nlohmann::ordered_json::array();
  for (const auto& w : p.waypoints) wp.push_back({w.x, w.y, w.theta});
  j["waypoints"] = wp;
  nlohmann::ordered_json mp = nlohmann::ordered_json::array();
  for (const auto& m : p.motion_probs) mp.push_back({m[0], m[1]});
  j["motion_probs"] = mp;
  j["attention"] = p.attention;
  return j.dump();
}

PredictionRecord prediction_from_line(const std::string& line, std::size_t line_no) {
  try {
    const auto j = nlohmann::json::parse(line);
    PredictionRecord p;
    p.scenario_id = j.at("scenario_id").get<std::string>();
    p.frame_index = j.at("frame_index").get<std::size_t>();
    for (const auto& w : j.at("waypoints")) {
      if (w.size() != 3) throw ParseError("waypoint needs 3 numbers", line_no);
      p.waypoints.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>()});
    }
    for (const auto& m : j.at("motion_probs")) {
      if (m.size() != 2) throw ParseError("motion_probs row needs 2 numbers", line_no);
      p.motion_probs.push_back({m[0].get<double>(), m[1].get<double>()});
    }
    p.attention = j.at("attention").get<std::vector<double>>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what(), line_no);
  }
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty()) out.push_back(prediction_from_line(line, no));
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

std::string polygon(const OrientedBox& b, const std::string& cls, const std::string& style) {
  std::string pts;
  for (const auto& [x, y] : obb_corners(b)) {
    if (!pts.empty()) pts += ' ';
    pts += num(x) + "," + num(y);
  }
  return "  <polygon class=\"" + cls + "\" points=\"" + pts + "\" " + style + "/>\n";
}

std::string polyline(std::span<const Pose2D> poses, const std::string& cls,
                     const std::string& color) {
  std::string pts;
  for (const auto& p : poses) {
    if (!pts.empty()) pts += ' ';
    pts += num(p.x) + "," + num(p.y);
  }
  return "  <polyline class=\"" + cls + "\" points=\"" + pts + "\" fill=\"none\" stroke=\"" +
         color + "\" stroke-width=\"0.08\"/>\n";
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  const double hx = spec.bounds.half_length + 1.0;
  const double hy = spec.bounds.half_width + 1.0;
  // Boxes are axis aligned in the lot frame; half_length runs along x.
  const double w = 2.0 * hx;
  const double h = 2.0 * hy;
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w * 20.0) + "\" height=\"" +
         num(h * 20.0) + "\" viewBox=\"" + num(-hx) + " " + num(-hy) + " " + num(w) + " " +
         num(h) + "\">\n";
  out += "<g transform=\"scale(1,-1)\">\n";
  out += polygon(spec.bounds, "lot", "fill=\"#f4f4f4\" stroke=\"#999\" stroke-width=\"0.05\"");
  for (const auto& s : spec.lot) {
    const bool target = s.slot_id == spec.target_slot_id;
    out += polygon({s.center, 0.5 * s.length, 0.5 * s.width}, target ? "slot target" : "slot",
                   target ? "fill=\"#dff5df\" stroke=\"#2a2\" stroke-width=\"0.05\""
                          : "fill=\"none\" stroke=\"#bbb\" stroke-width=\"0.03\"");
  }
  for (const auto& v : spec.vehicles) {
    out += polygon(v, "vehicle", "fill=\"#888\" stroke=\"#444\" stroke-width=\"0.03\"");
  }
  if (!spec.attention.empty() && spec.attention_side > 0) {
    const double mx = *std::max_element(spec.attention.begin(), spec.attention.end());
    const auto& e = spec.attention_ego;
    out += "  <g class=\"attention\" transform=\"translate(" + num(e.x) + "," + num(e.y) +
           ") rotate(" + num(rad2deg(e.theta)) + ")\">\n";
    const int n = spec.attention_side;
    const double c = spec.attention_cell;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double v = mx > 0.0 ? spec.attention[static_cast<std::size_t>(i * n + j)] / mx : 0.0;
        const int g = static_cast<int>(std::lround(255.0 * (1.0 - v)));
        out += "    <rect class=\"attn\" x=\"" + num(-0.5 * n * c + i * c) + "\" y=\"" +
               num(-0.5 * n * c + j * c) + "\" width=\"" + num(c) + "\" height=\"" + num(c) +
               "\" fill=\"rgb(" + std::to_string(g) + "," + std::to_string(g) + "," +
               std::to_string(g) + ")\" fill-opacity=\"0.5\"/>\n";
      }
    }
    out += "  </g>\n";
  }
  if (!spec.gt.empty()) out += polyline(spec.gt, "gt", "blue");
  for (const auto& p : spec.predictions) out += polyline(p, "pred", "red");
  if (spec.gt_states.size() == spec.gt.size()) {
    for (auto idx : shift_indices(spec.gt_states)) {
      const auto& p = spec.gt[idx];
      out += "  <circle class=\"shift\" cx=\"" + num(p.x) + "\" cy=\"" + num(p.y) +
             "\" r=\"0.25\" fill=\"none\" stroke=\"orange\" stroke-width=\"0.06\"/>\n";
    }
  }
  out += "</g>\n</svg>\n";
  return out;
}

}  // namespace parkbench
