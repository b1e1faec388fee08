#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rbc/trainer.hpp"

namespace rbc::harness {

inline constexpr std::array<const char*, 5> kMetricNames = {"auc", "alpha_ause", "rho_ause", "alpha_crps",
                                                             "rho_crps"};

struct ResultRow {
  LossKind loss = LossKind::W1;
  double gamma = 0.0;
  TargetMode target_mode = TargetMode::Unimodal;
  std::uint64_t seed = 0;
  std::array<double, 5> metrics{};  // in kMetricNames order
};

struct AggregateRow {
  LossKind loss;
  double gamma;
  TargetMode target_mode;
  std::size_t n;
  std::array<double, 5> mean;
  std::optional<std::array<double, 5>> standard_error;  // only for n >= 2
};

/// Mean and standard error (n - 1 denominator) per (loss, gamma, target
/// mode), in order of first appearance.
std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

/// `loss,gamma,target_mode,seed,auc,alpha_ause,rho_ause,alpha_crps,rho_crps`
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& in);

/// `loss,gamma,target_mode,n,auc_mean,auc_se,...`; SE cells are empty for
/// single-seed groups.
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

}  // namespace rbc::harness
