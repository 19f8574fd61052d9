#include "qdot/io.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace qdot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

struct Table {
  json header;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string_view>> rows;
  std::string storage;
};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Table read_table(const fs::path& path, const std::string& format,
                 const std::vector<std::string>& columns) {
  Table t;
  t.storage = read_file(path);
  std::string_view all(t.storage);
  auto next_line = [&all]() -> std::string_view {
    const auto pos = all.find('\n');
    std::string_view line = all.substr(0, pos);
    all = pos == std::string_view::npos ? std::string_view{} : all.substr(pos + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };
  const std::string_view first = next_line();
  if (first.size() < 2 || first[0] != '#')
    throw FormatError(path.string() + ": missing '#' JSON header line");
  try {
    t.header = json::parse(first.substr(1));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad JSON header: " + e.what());
  }
  if (t.header.value("format", "") != format)
    throw FormatError(path.string() + ": expected format '" + format + "'");
  const auto names = split(next_line());
  if (names.size() != columns.size())
    throw FormatError(path.string() + ": unexpected column count");
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] != columns[i])
      throw FormatError(path.string() + ": expected column '" + columns[i] + "'");
  while (!all.empty()) {
    const std::string_view line = next_line();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != columns.size())
      throw FormatError(path.string() + ": ragged row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

template <typename T>
T parse_number(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw FormatError("bad number '" + std::string(s) + "'");
  return v;
}

std::string header_line(const json& j) { return "# " + j.dump() + "\n"; }

json merged(json base, const json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) base[it.key()] = it.value();
  return base;
}

const char* kind_name(JumpKind k) {
  return k == JumpKind::ChargeIn ? "charge_in" : "charge_out";
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(root + (stream + 1) * 0x9E3779B97F4A7C15ULL);
}

std::uint64_t derive_seed(std::uint64_t root, SeedStream stream) {
  return derive_seed(root, static_cast<std::uint64_t>(stream));
}

void validate(const RunConfig& c) {
  validate(c.params);
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("invalid configuration: " + what);
  };
  if (!(c.duration >= 0.0)) fail("duration_us must be >= 0");
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) fail("threshold must lie in (0, 1)");
  if (c.omega_grid_n == 0) fail("omega_grid_n must be >= 1");
  if (c.omega_grid_n > 1 && !(c.omega_grid_hi > c.omega_grid_lo))
    fail("omega_grid_hi must exceed omega_grid_lo");
  if (!(c.guess_omega >= 0.0 && c.guess_gamma_down >= 0.0 && c.guess_gamma_up >= 0.0))
    fail("guesses must be >= 0");
  if (c.n_inner < 1 || c.n_outer < 1) fail("iteration counts must be >= 1");
  if (!(c.tolerance > 0.0)) fail("tolerance must be > 0");
  if (c.histogram_bins == 0) fail("histogram_bins must be >= 1");
  if (c.checkpoint_interval == 0) fail("checkpoint_interval must be >= 1");
}

json to_json(const ModelParams& p) {
  return {{"omega_rad_per_us", p.omega},   {"gamma_down_per_us", p.gamma_down},
          {"gamma_up_per_us", p.gamma_up}, {"r0_counts_per_us", p.r0},
          {"r1_counts_per_us", p.r1},      {"dt_sim_us", p.dt_sim},
          {"bin_dt_us", p.bin_dt}};
}

ModelParams params_from_json(const json& j) {
  ModelParams p;
  p.omega = j.value("omega_rad_per_us", p.omega);
  p.gamma_down = j.value("gamma_down_per_us", p.gamma_down);
  p.gamma_up = j.value("gamma_up_per_us", p.gamma_up);
  p.r0 = j.value("r0_counts_per_us", p.r0);
  p.r1 = j.value("r1_counts_per_us", p.r1);
  p.dt_sim = j.value("dt_sim_us", p.dt_sim);
  p.bin_dt = j.value("bin_dt_us", p.bin_dt);
  return p;
}

json to_json(const RunConfig& c) {
  return {{"params", to_json(c.params)},
          {"duration_us", c.duration},
          {"seed", c.seed},
          {"threshold", c.threshold},
          {"omega_grid_lo_rad_per_us", c.omega_grid_lo},
          {"omega_grid_hi_rad_per_us", c.omega_grid_hi},
          {"omega_grid_n", c.omega_grid_n},
          {"guess_omega_rad_per_us", c.guess_omega},
          {"guess_gamma_down_per_us", c.guess_gamma_down},
          {"guess_gamma_up_per_us", c.guess_gamma_up},
          {"n_inner", c.n_inner},
          {"n_outer", c.n_outer},
          {"tolerance", c.tolerance},
          {"histogram_bins", c.histogram_bins},
          {"snapshot_every_bins", c.snapshot_every},
          {"in_memory_limit_bins", c.in_memory_limit},
          {"checkpoint_interval_bins", c.checkpoint_interval}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("params")) c.params = params_from_json(j.at("params"));
    c.duration = j.value("duration_us", c.duration);
    c.seed = j.value("seed", c.seed);
    c.threshold = j.value("threshold", c.threshold);
    c.omega_grid_lo = j.value("omega_grid_lo_rad_per_us", c.omega_grid_lo);
    c.omega_grid_hi = j.value("omega_grid_hi_rad_per_us", c.omega_grid_hi);
    c.omega_grid_n = j.value("omega_grid_n", c.omega_grid_n);
    c.guess_omega = j.value("guess_omega_rad_per_us", c.guess_omega);
    c.guess_gamma_down = j.value("guess_gamma_down_per_us", c.guess_gamma_down);
    c.guess_gamma_up = j.value("guess_gamma_up_per_us", c.guess_gamma_up);
    c.n_inner = j.value("n_inner", c.n_inner);
    c.n_outer = j.value("n_outer", c.n_outer);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
    c.snapshot_every = j.value("snapshot_every_bins", c.snapshot_every);
    c.in_memory_limit = j.value("in_memory_limit_bins", c.in_memory_limit);
    c.checkpoint_interval = j.value("checkpoint_interval_bins", c.checkpoint_interval);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad configuration: ") + e.what());
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  try {
    return config_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void save_config(const RunConfig& c, const fs::path& path) {
  write_file(path, to_json(c).dump(2) + "\n");
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string file_digest(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string config_digest(const RunConfig& c) { return sha256_hex(to_json(c).dump()); }

void write_trajectory(const fs::path& path, const TrajectoryRecord& rec,
                      const json& extra) {
  json events = json::array();
  for (const auto& e : rec.events)
    events.push_back({{"t_us", e.time}, {"kind", kind_name(e.kind)}});
  const json header = merged({{"format", "qdot-trajectory"},
                              {"version", 1},
                              {"params", to_json(rec.params)},
                              {"seed", rec.seed},
                              {"duration_us", rec.duration},
                              {"events", events}},
                             extra);
  std::string out = header_line(header);
  out += "t_us,n,p_up\n";
  auto buf = fmt::memory_buffer();
  for (std::size_t i = 0; i < rec.occupancy.size(); ++i)
    fmt::format_to(std::back_inserter(buf), "{},{},{}\n",
                   rec.time(static_cast<std::int64_t>(i)), rec.occupancy[i], rec.p_up[i]);
  out.append(buf.data(), buf.size());
  write_file(path, out);
}

TrajectoryFile read_trajectory(const fs::path& path) {
  Table t = read_table(path, "qdot-trajectory", {"t_us", "n", "p_up"});
  TrajectoryFile f;
  f.header = t.header;
  auto& r = f.record;
  try {
    r.params = params_from_json(t.header.at("params"));
    r.seed = t.header.at("seed").get<std::uint64_t>();
    r.duration = t.header.at("duration_us").get<double>();
    for (const auto& e : t.header.at("events")) {
      const auto kind = e.at("kind").get<std::string>();
      if (kind != "charge_in" && kind != "charge_out")
        throw FormatError("unknown jump kind " + kind);
      r.events.push_back({e.at("t_us").get<double>(),
                          kind == "charge_in" ? JumpKind::ChargeIn : JumpKind::ChargeOut});
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  r.occupancy.reserve(t.rows.size());
  r.p_up.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    r.occupancy.push_back(static_cast<std::uint8_t>(parse_number<int>(row[1])));
    r.p_up.push_back(parse_number<double>(row[2]));
  }
  return f;
}

void write_count_record(const fs::path& path, const CountRecord& rec,
                        const json& extra) {
  const json header = merged({{"format", "qdot-counts"},
                              {"version", 1},
                              {"bin_dt_us", rec.bin_dt},
                              {"r0_counts_per_us", rec.r0},
                              {"r1_counts_per_us", rec.r1},
                              {"seed", rec.seed},
                              {"duration_us", rec.duration}},
                             extra);
  std::string out = header_line(header);
  out += "bin_index,count\n";
  auto buf = fmt::memory_buffer();
  for (std::size_t k = 0; k < rec.counts.size(); ++k)
    fmt::format_to(std::back_inserter(buf), "{},{}\n", k, rec.counts[k]);
  out.append(buf.data(), buf.size());
  write_file(path, out);
}

CountFile read_count_record(const fs::path& path) {
  Table t = read_table(path, "qdot-counts", {"bin_index", "count"});
  CountFile f;
  f.header = t.header;
  auto& r = f.record;
  try {
    r.bin_dt = t.header.at("bin_dt_us").get<double>();
    r.r0 = t.header.at("r0_counts_per_us").get<double>();
    r.r1 = t.header.at("r1_counts_per_us").get<double>();
    r.seed = t.header.at("seed").get<std::uint64_t>();
    r.duration = t.header.at("duration_us").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  r.counts.reserve(t.rows.size());
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    if (parse_number<std::size_t>(t.rows[k][0]) != k)
      throw FormatError(path.string() + ": bin indices must be 0, 1, 2, ...");
    const auto m = parse_number<std::int64_t>(t.rows[k][1]);
    if (m < 0) throw FormatError(path.string() + ": negative count");
    r.counts.push_back(m);
  }
  return f;
}

void write_timeline(const fs::path& path, const SmoothedTimeline& tl,
                    double threshold, const json& extra) {
  const json header = merged({{"format", "qdot-timeline"},
                              {"version", 1},
                              {"bin_dt_us", tl.bin_dt},
                              {"threshold", threshold},
                              {"total_log_likelihood", tl.total_log_likelihood}},
                             extra);
  std::string out = header_line(header);
  out += "t_us,P_filter,P_PQS,assigned_state\n";
  auto buf = fmt::memory_buffer();
  for (std::size_t k = 0; k < tl.pqs_occupation.size(); ++k)
    fmt::format_to(std::back_inserter(buf), "{},{},{},{}\n",
                   static_cast<double>(k + 1) * tl.bin_dt, tl.filter_occupation[k],
                   tl.pqs_occupation[k], tl.pqs_occupation[k] > threshold ? 1 : 0);
  out.append(buf.data(), buf.size());
  write_file(path, out);
}

TimelineFile read_timeline(const fs::path& path) {
  Table t = read_table(path, "qdot-timeline",
                       {"t_us", "P_filter", "P_PQS", "assigned_state"});
  TimelineFile f;
  f.header = t.header;
  try {
    f.bin_dt = t.header.at("bin_dt_us").get<double>();
    f.threshold = t.header.at("threshold").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  for (const auto& row : t.rows) {
    f.time.push_back(parse_number<double>(row[0]));
    f.filter.push_back(parse_number<double>(row[1]));
    f.pqs.push_back(parse_number<double>(row[2]));
    f.assigned.push_back(parse_number<int>(row[3]));
  }
  return f;
}

void write_histogram(const fs::path& path, const DwellHistogram& h,
                     const json& extra) {
  const json header = merged({{"format", "qdot-dwell-histogram"},
                              {"version", 1},
                              {"occupied_intervals", h.occupied.size()},
                              {"empty_intervals", h.empty.size()}},
                             extra);
  std::string out = header_line(header);
  out += "bin_lo_us,bin_hi_us,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out += fmt::format("{},{},{}\n", h.edges[i], h.edges[i + 1], h.counts[i]);
  write_file(path, out);
}

void write_likelihood_evolution(const fs::path& path, const LikelihoodGrid& grid,
                                const json& extra) {
  const json header = merged({{"format", "qdot-likelihood-evolution"},
                              {"version", 1},
                              {"candidates", grid.candidates.size()}},
                             extra);
  std::string out = header_line(header);
  out += "t_us,omega_rad_per_us,log_likelihood,posterior\n";
  auto buf = fmt::memory_buffer();
  for (std::size_t s = 0; s < grid.snapshots.size(); ++s) {
    const auto& row = grid.snapshots[s];
    double top = -std::numeric_limits<double>::infinity();
    for (double v : row) top = std::max(top, v);
    double sum = 0.0;
    for (double v : row) sum += std::isfinite(v) ? std::exp(v - top) : 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double post = std::isfinite(row[c]) ? std::exp(row[c] - top) / sum : 0.0;
      fmt::format_to(std::back_inserter(buf), "{},{},{},{}\n", grid.snapshot_times[s],
                     grid.candidates[c], row[c], post);
    }
  }
  out.append(buf.data(), buf.size());
  write_file(path, out);
}

}  // namespace qdot
