#include "rbc/harness/results.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "rbc/error.hpp"
#include "rbc/format.hpp"

namespace rbc::harness {

namespace {

constexpr const char* kHeader = "loss,gamma,target_mode,seed,auc,alpha_ause,rho_ause,alpha_crps,rho_crps";

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<AggregateRow> out;
  std::vector<std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    std::size_t g = 0;
    while (g < out.size() &&
           !(out[g].loss == r.loss && out[g].gamma == r.gamma && out[g].target_mode == r.target_mode)) {
      ++g;
    }
    if (g == out.size()) {
      out.push_back({r.loss, r.gamma, r.target_mode, 0, {}, std::nullopt});
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto& members = groups[g];
    const double n = static_cast<double>(members.size());
    out[g].n = members.size();
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      double sum = 0.0;
      for (const auto* r : members) sum += r->metrics[m];
      out[g].mean[m] = sum / n;
    }
    if (members.size() >= 2) {
      std::array<double, 5> se{};
      for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
        double ss = 0.0;
        for (const auto* r : members) ss += (r->metrics[m] - out[g].mean[m]) * (r->metrics[m] - out[g].mean[m]);
        se[m] = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      }
      out[g].standard_error = se;
    }
  }
  return out;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.loss) << ',' << fmt6(r.gamma) << ',' << to_string(r.target_mode) << ',' << r.seed;
    for (double v : r.metrics) out << ',' << fmt6(v);
    out << '\n';
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw FormatError("results CSV has an unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw FormatError("results CSV row has " + std::to_string(cells.size()) + " cells");
    try {
      ResultRow r;
      r.loss = parse_loss_kind(cells[0]);
      r.gamma = std::stod(cells[1]);
      r.target_mode = parse_target_mode(cells[2]);
      r.seed = std::stoull(cells[3]);
      for (std::size_t m = 0; m < 5; ++m) r.metrics[m] = std::stod(cells[4 + m]);
      rows.push_back(r);
    } catch (const std::exception& e) {
      throw FormatError("bad results CSV row '" + line + "': " + e.what());
    }
  }
  return rows;
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "loss,gamma,target_mode,n";
  for (const char* m : kMetricNames) out << ',' << m << "_mean," << m << "_se";
  out << '\n';
  for (const auto& r : rows) {
    out << to_string(r.loss) << ',' << fmt6(r.gamma) << ',' << to_string(r.target_mode) << ',' << r.n;
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      out << ',' << fmt6(r.mean[m]) << ',';
      if (r.standard_error) out << fmt6((*r.standard_error)[m]);
    }
    out << '\n';
  }
}

}  // namespace rbc::harness
