#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "qdot/estimation.hpp"
#include "qdot/model.hpp"
#include "qdot/sensor.hpp"
#include "qdot/smoother.hpp"
#include "qdot/trajectory.hpp"

namespace qdot {

/// Thrown for malformed input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seeding. Component seeds are splitmix64(root + (stream + 1) * golden),
// with fixed stream ids below.
enum class SeedStream : std::uint64_t { Trajectory = 0, Sensor = 1 };
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, SeedStream stream);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

struct RunConfig {
  ModelParams params;
  double duration = 1000.0;  // us
  std::uint64_t seed = 1;
  double threshold = 0.5;
  double omega_grid_lo = 3.5;  // rad/us
  double omega_grid_hi = 6.5;
  std::size_t omega_grid_n = 60;
  double guess_omega = 4.0;
  double guess_gamma_down = 2.0;
  double guess_gamma_up = 4.0;
  int n_inner = 5;
  int n_outer = 5;
  double tolerance = 1e-3;
  std::size_t histogram_bins = 50;
  std::size_t snapshot_every = 1000;  // bins
  std::size_t in_memory_limit = 1'000'000;
  std::size_t checkpoint_interval = 1000;

  bool operator==(const RunConfig&) const = default;
};

/// Throws std::invalid_argument on any inconsistent field.
void validate(const RunConfig& c);

nlohmann::json to_json(const ModelParams& p);
ModelParams params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& c, const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);
std::string config_digest(const RunConfig& c);

// Every file is a single '#'-prefixed JSON header line followed by a CSV
// table with a column-name row.

struct TrajectoryFile {
  TrajectoryRecord record;
  nlohmann::json header;
};
void write_trajectory(const std::filesystem::path& path,
                      const TrajectoryRecord& rec,
                      const nlohmann::json& extra = nlohmann::json::object());
TrajectoryFile read_trajectory(const std::filesystem::path& path);

struct CountFile {
  CountRecord record;
  nlohmann::json header;
};
void write_count_record(const std::filesystem::path& path,
                        const CountRecord& rec,
                        const nlohmann::json& extra = nlohmann::json::object());
CountFile read_count_record(const std::filesystem::path& path);

struct TimelineFile {
  double bin_dt = 0.0;
  double threshold = 0.5;
  std::vector<double> time;
  std::vector<double> filter;
  std::vector<double> pqs;
  std::vector<int> assigned;
  nlohmann::json header;
};
void write_timeline(const std::filesystem::path& path,
                    const SmoothedTimeline& tl, double threshold,
                    const nlohmann::json& extra = nlohmann::json::object());
TimelineFile read_timeline(const std::filesystem::path& path);

void write_histogram(const std::filesystem::path& path,
                     const DwellHistogram& h,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Long-format likelihood evolution: time_us, omega, log_likelihood,
/// posterior (normalized within each snapshot).
void write_likelihood_evolution(const std::filesystem::path& path,
                                const LikelihoodGrid& grid,
                                const nlohmann::json& extra = nlohmann::json::object());

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace qdot
