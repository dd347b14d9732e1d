#include "dynaroute/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dynaroute {

std::string fmt(double x) {
  if (std::isnan(x)) return UNDEFINED_MARKER;
  if (x == 0) x = 0;  // drop negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

namespace {

std::string fmt_opt(const std::optional<double>& x) { return x ? fmt(*x) : UNDEFINED_MARKER; }

}  // namespace

double compute_throughput(const MetricsLog& log) {
  const double d = log.duration();
  if (!(d > 0)) return 0.0;
  return delivered_bits(log) / d;
}

std::optional<double> compute_e2e_delay(const MetricsLog& log) {
  double total = 0;
  int n = 0;
  for (const auto& p : log.packets) {
    if (p.delivered_slot < 0) continue;
    total += (p.delivered_slot - p.arrival_slot) * log.dt;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

std::optional<double> min_gap(const MetricsLog& log) {
  std::optional<double> out;
  for (const auto& s : log.slots)
    for (const auto& v : s.vehicles)
      if (v.gap) out = out ? std::min(*out, *v.gap) : *v.gap;
  return out;
}

double max_abs_acceleration(const MetricsLog& log, bool followers_only) {
  double m = 0;
  for (const auto& s : log.slots)
    for (const auto& v : s.vehicles)
      if (!followers_only || v.gap) m = std::max(m, std::abs(v.a));
  return m;
}

double injected_bits(const MetricsLog& log) {
  double total = 0;
  for (const auto& p : log.packets) total += p.size;
  return total;
}

double delivered_bits(const MetricsLog& log) {
  double total = 0;
  for (const auto& s : log.slots) total += s.delivered_bits;
  return total;
}

int tracking_failures(const MetricsLog& log) {
  int n = 0;
  for (const auto& s : log.slots)
    for (const auto& v : s.vehicles)
      if (!v.tracking_ok) ++n;
  return n;
}

int cbf_violations(const MetricsLog& log, double alpha) {
  std::map<int, std::vector<double>> traces;
  for (const auto& s : log.slots)
    for (const auto& v : s.vehicles)
      if (v.h) traces[v.id].push_back(*v.h);
  int violations = 0;
  for (const auto& [id, h] : traces) {
    if (h.empty() || h[0] < 0) continue;
    for (std::size_t k = 1; k < h.size(); ++k) {
      if (!(h[k] - h[k - 1] >= -alpha * h[k - 1])) break;
      if (h[k] < 0) ++violations;
    }
  }
  return violations;
}

std::string trajectory_csv(const MetricsLog& log) {
  std::string out =
      "slot,t,vehicle_id,platoon,px,py,psi,v,a,gap_to_pred,h,v_err,p_err,tracking_ok,held,delivered_bits,"
      "delivered_packets\n";
  for (const auto& s : log.slots)
    for (const auto& v : s.vehicles) {
      out += std::to_string(s.slot) + ',' + fmt(s.t) + ',' + std::to_string(v.id) + ',' + std::to_string(v.platoon) +
             ',' + fmt(v.px) + ',' + fmt(v.py) + ',' + fmt(v.psi) + ',' + fmt(v.v) + ',' + fmt(v.a) + ',' +
             fmt_opt(v.gap) + ',' + fmt_opt(v.h) + ',' + fmt(v.v_err) + ',' + fmt(v.p_err) + ',' +
             (v.tracking_ok ? "1" : "0") + ',' + (v.held ? "1" : "0") + ',' + fmt(s.delivered_bits) + ',' +
             std::to_string(s.delivered_packets) + '\n';
    }
  return out;
}

std::string packets_csv(const MetricsLog& log) {
  std::string out = "packet_id,source,destination,arrival_slot,size_bits,delivered_slot,hops,outcome\n";
  for (const auto& p : log.packets)
    out += std::to_string(p.id) + ',' + std::to_string(p.source) + ',' + std::to_string(p.destination) + ',' +
           std::to_string(p.arrival_slot) + ',' + fmt(p.size) + ',' + std::to_string(p.delivered_slot) + ',' +
           std::to_string(p.hops) + ',' + p.outcome + '\n';
  return out;
}

std::string summary_csv(const MetricsLog& log) {
  int delivered = 0;
  for (const auto& p : log.packets) delivered += p.delivered_slot >= 0;
  std::string out = "metric,value\n";
  out += "slots," + std::to_string(log.slots.size()) + '\n';
  out += "throughput_bps," + fmt(compute_throughput(log)) + '\n';
  out += "mean_delay_s," + fmt_opt(compute_e2e_delay(log)) + '\n';
  out += "min_gap_m," + fmt_opt(min_gap(log)) + '\n';
  out += "max_abs_follower_accel," + fmt(max_abs_acceleration(log, true)) + '\n';
  out += "injected_bits," + fmt(injected_bits(log)) + '\n';
  out += "delivered_bits," + fmt(delivered_bits(log)) + '\n';
  out += "packets," + std::to_string(log.packets.size()) + '\n';
  out += "packets_delivered," + std::to_string(delivered) + '\n';
  out += "tracking_failures," + std::to_string(tracking_failures(log)) + '\n';
  out += std::string("collision,") + (log.collision ? "1" : "0") + '\n';
  out += "collision_slot," + std::to_string(log.collision_slot) + '\n';
  return out;
}

std::string plot_script(const std::string& trajectory_file) {
  return "import sys\n"
         "import pandas as pd\n"
         "import matplotlib\n"
         "matplotlib.use(\"Agg\")\n"
         "import matplotlib.pyplot as plt\n"
         "\n"
         "path = sys.argv[1] if len(sys.argv) > 1 else \"" +
         trajectory_file +
         "\"\n"
         "df = pd.read_csv(path, na_values=[\"NA\"])\n"
         "fig, axes = plt.subplots(4, 1, figsize=(8, 12), sharex=True)\n"
         "for vid, g in df.groupby(\"vehicle_id\"):\n"
         "    axes[0].plot(g[\"t\"], g[\"px\"], label=f\"v{vid}\")\n"
         "    axes[1].plot(g[\"t\"], g[\"gap_to_pred\"], label=f\"v{vid}\")\n"
         "    axes[2].plot(g[\"t\"], g[\"v\"], label=f\"v{vid}\")\n"
         "    axes[3].plot(g[\"t\"], g[\"a\"], label=f\"v{vid}\")\n"
         "for ax, name in zip(axes, [\"position (m)\", \"gap (m)\", \"speed (m/s)\", \"accel (m/s^2)\"]):\n"
         "    ax.set_ylabel(name)\n"
         "axes[-1].set_xlabel(\"t (s)\")\n"
         "axes[0].legend(ncol=4, fontsize=\"small\")\n"
         "fig.tight_layout()\n"
         "fig.savefig(path.rsplit(\".\", 1)[0] + \".png\", dpi=120)\n";
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

void export_log(const MetricsLog& log, const std::string& dir, bool with_plot_script) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir + "': " + ec.message());
  const std::filesystem::path base(dir);
  write_file(base / "trajectory.csv", trajectory_csv(log));
  write_file(base / "packets.csv", packets_csv(log));
  write_file(base / "summary.csv", summary_csv(log));
  if (with_plot_script) write_file(base / "plot.py", plot_script("trajectory.csv"));
}

std::string sweep_summary_csv(const std::vector<SweepRow>& rows) {
  std::string out = "param,value,mode,seeds,throughput_bps,mean_delay_s,min_gap_m,max_abs_accel\n";
  for (const auto& r : rows)
    out += r.param + ',' + fmt(r.value) + ',' + r.mode + ',' + std::to_string(r.seeds) + ',' + fmt(r.throughput) +
           ',' + fmt_opt(r.mean_delay) + ',' + fmt_opt(r.min_gap) + ',' + fmt(r.max_abs_a) + '\n';
  return out;
}

}  // namespace dynaroute
