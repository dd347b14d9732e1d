#pragma once

// Run records, aggregate figures and file export.

#include <optional>
#include <string>
#include <vector>

namespace dynaroute {

struct VehicleRecord {
  int id = 0;
  int platoon = 0;
  double px = 0, py = 0, psi = 0, v = 0;
  double a = 0;                 // applied acceleration
  std::optional<double> gap;    // bumper gap to predecessor, followers only
  std::optional<double> h;      // following-mode barrier value, followers only
  double v_err = 0;             // speed error against the formation reference
  double p_err = 0;             // spacing error against desired_gap
  bool tracking_ok = true;
  bool held = false;            // input held after a lost update
};

struct SlotRecord {
  int slot = 0;
  double t = 0;
  std::vector<VehicleRecord> vehicles;
  double delivered_bits = 0;
  int delivered_packets = 0;
  double active_capacity_bits = 0;  // sum over attempted links of rate * slot
};

struct PacketRecord {
  int id = 0;
  int source = 0;
  int destination = 0;
  int arrival_slot = 0;
  double size = 0;
  int delivered_slot = -1;
  int hops = 0;
  std::string outcome;  // delivered, expired, dead_end, pending
};

struct MetricsLog {
  double dt = 0.1;
  std::vector<SlotRecord> slots;
  std::vector<PacketRecord> packets;
  bool collision = false;
  int collision_slot = -1;

  double duration() const { return static_cast<double>(slots.size()) * dt; }
};

/// Delivered bits per second over the logged duration.
double compute_throughput(const MetricsLog& log);
/// Mean arrival-to-delivery time over delivered packets; empty when none.
std::optional<double> compute_e2e_delay(const MetricsLog& log);
/// Smallest follower gap over the run; empty when there are no followers.
std::optional<double> min_gap(const MetricsLog& log);
double max_abs_acceleration(const MetricsLog& log, bool followers_only);
double injected_bits(const MetricsLog& log);
double delivered_bits(const MetricsLog& log);
int tracking_failures(const MetricsLog& log);

/// Slots at which some follower's barrier went negative although h(0) >= 0
/// and the discrete barrier condition held at every earlier slot.
int cbf_violations(const MetricsLog& log, double alpha);

inline constexpr const char* UNDEFINED_MARKER = "NA";

std::string trajectory_csv(const MetricsLog& log);
std::string packets_csv(const MetricsLog& log);
std::string summary_csv(const MetricsLog& log);
std::string plot_script(const std::string& trajectory_file);

/// Writes trajectory.csv, packets.csv, summary.csv and optionally plot.py into dir.
void export_log(const MetricsLog& log, const std::string& dir, bool with_plot_script = true);

struct SweepRow {
  std::string param;
  double value = 0;
  std::string mode;
  int seeds = 0;
  double throughput = 0;
  std::optional<double> mean_delay;
  std::optional<double> min_gap;
  double max_abs_a = 0;
};

std::string sweep_summary_csv(const std::vector<SweepRow>& rows);

/// Fixed-format number used by every CSV writer.
std::string fmt(double x);

}  // namespace dynaroute
