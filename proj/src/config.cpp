#include "qlink/config.hpp"

#include "qlink/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

namespace qlink {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  mutable bool used = false;
};

struct KeyValueFile {
  std::map<std::string, Entry> entries;
  std::string origin;

  const Entry* find(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  std::string require(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw ConfigError(origin + ": missing required key '" + key + "'");
    return e->value;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
  }

  int line_of(const std::string& key) const {
    auto it = entries.find(key);
    return it == entries.end() ? 0 : it->second.line;
  }

  bool has(const std::string& key) const { return entries.count(key) != 0; }
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

KeyValueFile parse_key_value(std::istream& in, const std::string& origin) {
  KeyValueFile file;
  file.origin = origin;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'section.key = value'",
                        line_no);
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.find('.') == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": key '" + key +
                            "' is missing its section prefix",
                        line_no);
    if (file.entries.count(key))
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'",
                        line_no);
    file.entries[key] = Entry{value, line_no, false};
  }
  return file;
}

[[noreturn]] void fail(const KeyValueFile& f, const std::string& key, const std::string& what) {
  const int line = f.line_of(key);
  throw ConfigError(f.origin + ":" + std::to_string(line) + ": " + key + ": " + what, line);
}

double parse_double(const KeyValueFile& f, const std::string& key, const std::string& raw) {
  if (raw == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double v = std::stod(raw, &pos);
    if (pos != raw.size()) fail(f, key, "trailing characters after number '" + raw + "'");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    fail(f, key, "not a number: '" + raw + "'");
  }
}

double get_double(const KeyValueFile& f, const std::string& key, double fallback) {
  const Entry* e = f.find(key);
  return e ? parse_double(f, key, e->value) : fallback;
}

double require_double(const KeyValueFile& f, const std::string& key) {
  return parse_double(f, key, f.require(key));
}

double get_loss_db(const KeyValueFile& f, const std::string& key, double fallback) {
  const double v = get_double(f, key, fallback);
  if (v < 0.0) fail(f, key, "loss in dB must be >= 0");
  return v;
}

double get_probability(const KeyValueFile& f, const std::string& key, double fallback) {
  const double v = get_double(f, key, fallback);
  if (v < 0.0 || v > 1.0) fail(f, key, "probability must lie in [0,1]");
  return v;
}

std::vector<double> parse_list(const KeyValueFile& f, const std::string& key,
                               const std::string& raw) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(f, key, trim(item)));
  if (out.empty()) fail(f, key, "empty list");
  return out;
}

LanternModel parse_lantern(const KeyValueFile& f, const std::string& section, int dim) {
  LanternModel m = LanternModel::ideal(dim);
  m.insertion_loss_db = get_loss_db(f, section + ".insertion_loss_db", 0.0);
  if (const Entry* e = f.find(section + ".extinction_db")) {
    const auto list = parse_list(f, section + ".extinction_db", e->value);
    if (list.size() != static_cast<std::size_t>(dim))
      fail(f, section + ".extinction_db", "need one value per mode");
    for (double v : list)
      if (v > 0.0) fail(f, section + ".extinction_db", "extinction must be <= 0 dB");
    m.extinction_db = list;
  }
  const std::string phase = f.get(section + ".crosstalk_phase", "random");
  if (phase == "random")
    m.phase_mode = CrosstalkPhaseMode::random_per_trial;
  else if (phase == "fixed")
    m.phase_mode = CrosstalkPhaseMode::fixed;
  else
    fail(f, section + ".crosstalk_phase", "expected 'fixed' or 'random'");
  m.fixed_phase_rad = get_double(f, section + ".fixed_phase_rad", 0.0);
  return m;
}

const char* kKnownKeys[] = {
    "link.scheme", "link.dim", "link.visibility", "link.target_diagonal", "link.fit",
    "source.mean_photon_number",
    "lantern_alice.insertion_loss_db", "lantern_alice.extinction_db",
    "lantern_alice.crosstalk_phase", "lantern_alice.fixed_phase_rad",
    "lantern_bob.insertion_loss_db", "lantern_bob.extinction_db",
    "lantern_bob.crosstalk_phase", "lantern_bob.fixed_phase_rad",
    "fiber.length_km", "fiber.loss_coeff_db_per_km", "fiber.excess_loss_db",
    "detector.efficiency", "detector.dark_count_prob", "detector.gate_width_ns",
    "detector.trigger_rate_hz",
    "run.seed", "run.output_dir"};

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::string& origin) {
  const KeyValueFile f = parse_key_value(in, origin);

  for (const auto& [key, entry] : f.entries) {
    if (std::find_if(std::begin(kKnownKeys), std::end(kKnownKeys),
                     [&key](const char* k) { return key == k; }) == std::end(kKnownKeys))
      throw ConfigError(origin + ":" + std::to_string(entry.line) + ": unknown key '" + key + "'",
                        entry.line);
  }

  RunConfig run;

  const std::string scheme = f.get("link.scheme", "fmf_lantern");
  if (scheme == "fmf_lantern")
    run.scheme = Scheme::fmf_lantern;
  else if (scheme == "time_bin")
    run.scheme = Scheme::time_bin;
  else if (scheme == "long_mzi")
    run.scheme = Scheme::long_mzi;
  else
    fail(f, "link.scheme", "expected long_mzi, time_bin or fmf_lantern");

  run.dim = static_cast<int>(get_double(f, "link.dim", 2.0));
  if (run.dim < 2) fail(f, "link.dim", "dimension must be >= 2");

  const std::string vis = f.get("link.visibility", "1.0");
  if (vis == "auto") {
    run.visibility_auto = true;
    run.target_diagonal = require_double(f, "link.target_diagonal");
    if (run.target_diagonal < 0.5 || run.target_diagonal > 1.0)
      fail(f, "link.target_diagonal", "target diagonal must lie in [0.5, 1]");
  } else {
    run.visibility = get_probability(f, "link.visibility", 1.0);
    if (f.has("link.target_diagonal"))
      run.target_diagonal = require_double(f, "link.target_diagonal");
  }

  run.fit = f.get("link.fit", "none");
  if (run.fit != "none" && run.fit != "fit_dark_share" && run.fit != "fit_qber11")
    fail(f, "link.fit", "expected none, fit_dark_share or fit_qber11");

  run.source.mean_photon_number = get_double(f, "source.mean_photon_number", 0.4);
  if (run.source.mean_photon_number < 0.0)
    fail(f, "source.mean_photon_number", "mean photon number must be >= 0");

  if (run.scheme == Scheme::fmf_lantern) {
    run.lanterns = {parse_lantern(f, "lantern_alice", run.dim),
                    parse_lantern(f, "lantern_bob", run.dim)};
  } else {
    for (const char* prefix : {"lantern_alice", "lantern_bob"})
      for (const auto& [key, entry] : f.entries)
        if (key.rfind(prefix, 0) == 0)
          throw ConfigError(origin + ":" + std::to_string(entry.line) + ": " + key +
                                ": lantern sections only apply to the fmf_lantern scheme",
                            entry.line);
  }

  run.fiber.length_km = get_double(f, "fiber.length_km", 0.0);
  if (run.fiber.length_km < 0.0) fail(f, "fiber.length_km", "length must be >= 0");
  run.fiber.loss_coeff_db_per_km = get_loss_db(f, "fiber.loss_coeff_db_per_km", 0.0);
  run.fiber.excess_loss_db = get_loss_db(f, "fiber.excess_loss_db", 0.0);

  run.detector.efficiency = get_probability(f, "detector.efficiency", 0.1);
  run.detector.dark_count_prob = get_probability(f, "detector.dark_count_prob", 0.0);
  run.detector.gate_width_ns = get_double(f, "detector.gate_width_ns", 2.5);
  run.detector.trigger_rate_hz = get_double(f, "detector.trigger_rate_hz", 1.0e6);
  if (run.detector.gate_width_ns <= 0.0) fail(f, "detector.gate_width_ns", "must be positive");
  if (run.detector.trigger_rate_hz <= 0.0) fail(f, "detector.trigger_rate_hz", "must be positive");

  const double seed = get_double(f, "run.seed", 1.0);
  if (seed < 0.0) fail(f, "run.seed", "seed must be >= 0");
  run.seed = static_cast<std::uint64_t>(seed);
  run.output_dir = f.get("run.output_dir", ".");
  return run;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  return parse_run_config(in, path.string());
}

RunConfig preset_config(const std::string& name) {
  RunConfig run;
  if (name == "ideal") {
    run.scheme = Scheme::fmf_lantern;
    run.lanterns = {LanternModel::ideal(2), LanternModel::ideal(2)};
    run.detector.efficiency = 1.0;
    run.detector.dark_count_prob = 0.0;
    run.visibility = 1.0;
    return run;
  }
  if (name == "paper_b2b" || name == "paper_500m") {
    run.scheme = Scheme::fmf_lantern;
    run.source.mean_photon_number = 0.4;
    LanternModel mux = LanternModel::ideal(2);
    mux.insertion_loss_db = 3.25;  // 6.5 dB per pair, split evenly
    mux.phase_mode = CrosstalkPhaseMode::random_per_trial;
    LanternModel demux;
    demux.dim = 2;
    demux.insertion_loss_db = 3.25;
    demux.extinction_db = {-14.6, -16.2};  // end-to-end extinction, demux side
    demux.phase_mode = CrosstalkPhaseMode::random_per_trial;
    run.lanterns = {mux, demux};
    run.detector.efficiency = 0.1;
    run.detector.dark_count_prob = 2.4e-6;
    run.detector.gate_width_ns = 2.5;
    run.detector.trigger_rate_hz = 1.0e6;
    run.visibility_auto = true;
    if (name == "paper_b2b") {
      run.fiber = FiberSpan{0.01, 0.22, 0.0, nullptr};  // 10 m jumper
      run.target_diagonal = 0.955;
    } else {
      run.fiber = FiberSpan{0.5, 0.22, 1.09, nullptr};  // 1.2 dB total
      run.target_diagonal = 0.951;
    }
    return run;
  }
  throw ConfigError("unknown preset '" + name + "' (expected ideal, paper_b2b or paper_500m)");
}

ArchitectureConfig make_architecture(const RunConfig& run) {
  ArchitectureConfig cfg;
  cfg.scheme = run.scheme;
  cfg.dim = run.dim;
  cfg.source = run.source;
  cfg.lanterns = run.lanterns;
  cfg.fiber = run.fiber;
  cfg.detectors.assign(static_cast<std::size_t>(run.dim), run.detector);
  cfg.visibility = run.visibility_auto ? 1.0 : run.visibility;
  validate(cfg);
  if (run.visibility_auto) cfg.visibility = calibrate_visibility(cfg, run.target_diagonal);
  return cfg;
}

namespace {

std::string fmt(double v) { return format_double(v); }

}  // namespace

std::string echo_config(const RunConfig& run) {
  std::ostringstream out;
  out << "link.scheme = " << to_string(run.scheme) << "\n";
  out << "link.dim = " << run.dim << "\n";
  if (run.visibility_auto) {
    out << "link.visibility = auto\n";
    out << "link.target_diagonal = " << fmt(run.target_diagonal) << "\n";
  } else {
    out << "link.visibility = " << fmt(run.visibility) << "\n";
  }
  out << "link.fit = " << run.fit << "\n";
  out << "source.mean_photon_number = " << fmt(run.source.mean_photon_number) << "\n";
  if (run.lanterns) {
    const auto write_lantern = [&out](const char* section, const LanternModel& m) {
      out << section << ".insertion_loss_db = " << fmt(m.insertion_loss_db) << "\n";
      out << section << ".extinction_db = ";
      for (std::size_t i = 0; i < m.extinction_db.size(); ++i) {
        if (i) out << ", ";
        if (std::isinf(m.extinction_db[i]))
          out << "-inf";
        else
          out << fmt(m.extinction_db[i]);
      }
      out << "\n";
      out << section << ".crosstalk_phase = "
          << (m.phase_mode == CrosstalkPhaseMode::random_per_trial ? "random" : "fixed") << "\n";
      if (m.phase_mode == CrosstalkPhaseMode::fixed)
        out << section << ".fixed_phase_rad = " << fmt(m.fixed_phase_rad) << "\n";
    };
    write_lantern("lantern_alice", run.lanterns->first);
    write_lantern("lantern_bob", run.lanterns->second);
  }
  out << "fiber.length_km = " << fmt(run.fiber.length_km) << "\n";
  out << "fiber.loss_coeff_db_per_km = " << fmt(run.fiber.loss_coeff_db_per_km) << "\n";
  out << "fiber.excess_loss_db = " << fmt(run.fiber.excess_loss_db) << "\n";
  out << "detector.efficiency = " << fmt(run.detector.efficiency) << "\n";
  out << "detector.dark_count_prob = " << fmt(run.detector.dark_count_prob) << "\n";
  out << "detector.gate_width_ns = " << fmt(run.detector.gate_width_ns) << "\n";
  out << "detector.trigger_rate_hz = " << fmt(run.detector.trigger_rate_hz) << "\n";
  out << "run.seed = " << run.seed << "\n";
  out << "run.output_dir = " << run.output_dir << "\n";
  return out.str();
}

}  // namespace qlink
