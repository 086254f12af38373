#pragma once

#include <stdexcept>
#include <string>

namespace tcace {

// Failure categories surfaced by the library.  The CLI maps these onto
// process exit codes: input/validation problems exit with 2, numeric and
// statistical failures exit with 3.
enum class errc {
  // input / validation
  io_error,
  bad_config,
  missing_column,
  missing_value,
  non_binary_indicator,
  non_finite_value,
  empty_arm,
  empty_input,
  unexpected_outcome_on_target,
  dimension_mismatch,
  invalid_argument,
  // numeric / statistical
  separation,
  singular_hessian,
  not_converged,
  rank_deficient,
  insufficient_stratum,
  weak_first_stage,
  degenerate_denominator,
  singular_bread,
  first_stage_sign_violation,
  missing_target_assignment,
  no_target_compliance,
  no_proxy_data,
  degenerate_resample,
  degenerate_trial,
  no_target_compliers,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::io_error: return "IoError";
    case errc::bad_config: return "BadConfig";
    case errc::missing_column: return "MissingColumn";
    case errc::missing_value: return "MissingValue";
    case errc::non_binary_indicator: return "NonBinaryIndicator";
    case errc::non_finite_value: return "NonFiniteValue";
    case errc::empty_arm: return "EmptyArm";
    case errc::empty_input: return "EmptyInput";
    case errc::unexpected_outcome_on_target: return "UnexpectedOutcomeOnTarget";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::separation: return "Separation";
    case errc::singular_hessian: return "SingularHessian";
    case errc::not_converged: return "NotConverged";
    case errc::rank_deficient: return "RankDeficient";
    case errc::insufficient_stratum: return "InsufficientStratum";
    case errc::weak_first_stage: return "WeakFirstStage";
    case errc::degenerate_denominator: return "DegenerateDenominator";
    case errc::singular_bread: return "SingularBread";
    case errc::first_stage_sign_violation: return "FirstStageSignViolation";
    case errc::missing_target_assignment: return "MissingTargetAssignment";
    case errc::no_target_compliance: return "NoTargetCompliance";
    case errc::no_proxy_data: return "NoProxyData";
    case errc::degenerate_resample: return "DegenerateResample";
    case errc::degenerate_trial: return "DegenerateTrial";
    case errc::no_target_compliers: return "NoTargetCompliers";
  }
  return "UnknownError";
}

// Input-side failures get CLI exit code 2, numeric ones exit code 3.
inline bool is_input_error(errc c) {
  switch (c) {
    case errc::io_error:
    case errc::bad_config:
    case errc::missing_column:
    case errc::missing_value:
    case errc::non_binary_indicator:
    case errc::non_finite_value:
    case errc::empty_arm:
    case errc::empty_input:
    case errc::unexpected_outcome_on_target:
    case errc::dimension_mismatch:
    case errc::invalid_argument:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& detail, long row = -1,
        const std::string& column = "")
      : std::runtime_error(format(code, detail, row, column)),
        code_(code),
        row_(row),
        column_(column) {}

  errc code() const { return code_; }
  long row() const { return row_; }          // 1-based file line, -1 if n/a
  const std::string& column() const { return column_; }

 private:
  static std::string format(errc code, const std::string& detail, long row,
                            const std::string& column) {
    std::string msg = "[";
    msg += errc_name(code);
    msg += "]";
    if (row >= 0) msg += " row " + std::to_string(row);
    if (!column.empty()) {
      msg += row >= 0 ? ", column " : " column ";
      msg += column;
    }
    if (!detail.empty()) {
      msg += ": ";
      msg += detail;
    }
    return msg;
  }

  errc code_;
  long row_;
  std::string column_;
};

}  // namespace tcace
