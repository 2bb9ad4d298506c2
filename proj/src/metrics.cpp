#include "fedfmc/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fedfmc/errors.hpp"

namespace fedfmc {

namespace {

// Fixed-precision formatting keeps the file byte-stable across runs.
std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_metrics(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (const auto& row : rows) {
    for (const auto& d : row.devices) {
      os << row.round << ',' << to_string(row.phase) << ',' << row.group_count << ','
         << d.device_id << ',' << d.group_id << ',' << fixed(d.val_loss) << ','
         << fixed(d.val_acc) << ',' << d.archetype_id << ','
         << fixed(d.archetype_test_acc) << ',' << fixed(d.global_test_acc) << ','
         << row.updates_delta << ',' << row.transfers_delta << '\n';
    }
  }
  return os.str();
}

void emit_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw std::invalid_argument("no metrics rows to emit");
  const std::string text = format_metrics(rows);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open metrics file " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw Error("failed writing metrics file " + path.string());
}

}  // namespace fedfmc
