#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tcace/error.hpp"

namespace tcace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double missing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// One merged row: study units (s=1) carry z, d, y; target units (s=0) carry
// covariates only, plus optional auxiliary compliance fields.
struct UnitRecord {
  Vec x;
  int s = 0;
  std::optional<int> z;
  std::optional<int> d;        // treatment received, study rows
  std::optional<double> y;
  std::optional<int> c_proxy;  // binary compliance proxy, target rows
  std::optional<int> d_target; // treatment received, target rows
};

// Prepends a column of ones unless the leading column is already a nonzero
// constant (then it serves as the intercept and the matrix passes through).
inline Mat augment_intercept(const Mat& m) {
  if (m.rows() == 0) {
    throw Error(errc::empty_input, "cannot augment an empty matrix");
  }
  if (m.cols() > 0) {
    const double head = m(0, 0);
    if (head != 0.0 && (m.col(0).array() == head).all()) {
      return m;
    }
  }
  Mat out(m.rows(), m.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(m.cols()) = m;
  return out;
}

// Column-oriented dataset.  Optional per-row values use NaN for "absent";
// index caches are rebuilt on construction and the object is treated as
// immutable afterwards.
class Dataset {
 public:
  Mat x;          // units x p, intercept included
  Vec s;          // 0/1
  Vec z, d, y;    // NaN where absent
  Vec c_proxy;    // NaN where absent (target rows)
  Vec d_target;   // NaN where absent (target rows)

  std::vector<Eigen::Index> study_rows, target_rows;
  std::vector<Eigen::Index> treated_rows, control_rows;  // within study

  Eigen::Index units() const { return x.rows(); }
  Eigen::Index n() const { return static_cast<Eigen::Index>(study_rows.size()); }
  Eigen::Index big_n() const {
    return static_cast<Eigen::Index>(target_rows.size());
  }
  Eigen::Index p() const { return x.cols(); }

  static Dataset from_columns(Mat x, Vec s, Vec z, Vec d, Vec y,
                              Vec c_proxy = Vec(), Vec d_target = Vec()) {
    Dataset ds;
    const Eigen::Index m = x.rows();
    if (m == 0) throw Error(errc::empty_input, "dataset has no rows");
    auto fill_optional = [m](Vec& v) {
      if (v.size() == 0) v = Vec::Constant(m, missing);
    };
    ds.x = std::move(x);
    ds.s = std::move(s);
    ds.z = std::move(z);
    ds.d = std::move(d);
    ds.y = std::move(y);
    ds.c_proxy = std::move(c_proxy);
    ds.d_target = std::move(d_target);
    fill_optional(ds.c_proxy);
    fill_optional(ds.d_target);
    for (const Vec* v : {&ds.s, &ds.z, &ds.d, &ds.y, &ds.c_proxy, &ds.d_target}) {
      if (v->size() != m) {
        throw Error(errc::dimension_mismatch,
                    "column length " + std::to_string(v->size()) +
                        " does not match " + std::to_string(m) + " rows");
      }
    }
    ds.check_rows();
    ds.build_index();
    return ds;
  }

  static Dataset from_records(const std::vector<UnitRecord>& records) {
    if (records.empty()) throw Error(errc::empty_input, "no records");
    const Eigen::Index m = static_cast<Eigen::Index>(records.size());
    const Eigen::Index p = records.front().x.size();
    Mat x(m, p);
    Vec s(m), z(m), d(m), y(m), cp(m), dt(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const UnitRecord& r = records[static_cast<std::size_t>(i)];
      if (r.x.size() != p) {
        throw Error(errc::dimension_mismatch,
                    "covariate dimension varies across records", i + 1);
      }
      x.row(i) = r.x.transpose();
      s[i] = r.s;
      z[i] = r.z ? static_cast<double>(*r.z) : missing;
      d[i] = r.d ? static_cast<double>(*r.d) : missing;
      y[i] = r.y ? *r.y : missing;
      cp[i] = r.c_proxy ? static_cast<double>(*r.c_proxy) : missing;
      dt[i] = r.d_target ? static_cast<double>(*r.d_target) : missing;
    }
    return from_columns(std::move(x), std::move(s), std::move(z), std::move(d),
                        std::move(y), std::move(cp), std::move(dt));
  }

  UnitRecord record(Eigen::Index i) const {
    UnitRecord r;
    r.x = x.row(i).transpose();
    r.s = static_cast<int>(s[i]);
    if (!is_missing(z[i])) r.z = static_cast<int>(z[i]);
    if (!is_missing(d[i])) r.d = static_cast<int>(d[i]);
    if (!is_missing(y[i])) r.y = y[i];
    if (!is_missing(c_proxy[i])) r.c_proxy = static_cast<int>(c_proxy[i]);
    if (!is_missing(d_target[i])) r.d_target = static_cast<int>(d_target[i]);
    return r;
  }

  // Row subset (with repetition) — the bootstrap resampling primitive.
  // Re-validates, so a resample that empties a study arm throws EmptyArm.
  Dataset gather(const std::vector<Eigen::Index>& rows) const {
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    Mat gx(m, x.cols());
    Vec gs(m), gz(m), gd(m), gy(m), gcp(m), gdt(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index r = rows[static_cast<std::size_t>(i)];
      gx.row(i) = x.row(r);
      gs[i] = s[r];
      gz[i] = z[r];
      gd[i] = d[r];
      gy[i] = y[r];
      gcp[i] = c_proxy[r];
      gdt[i] = d_target[r];
    }
    return from_columns(std::move(gx), std::move(gs), std::move(gz),
                        std::move(gd), std::move(gy), std::move(gcp),
                        std::move(gdt));
  }

  // Copy with one covariate column appended (used to benchmark a latent or
  // held-out covariate in the selection model).
  Dataset with_extra_column(const Vec& col) const {
    if (col.size() != units()) {
      throw Error(errc::dimension_mismatch, "extra column length mismatch");
    }
    Mat gx(x.rows(), x.cols() + 1);
    gx.leftCols(x.cols()) = x;
    gx.col(x.cols()) = col;
    return from_columns(std::move(gx), s, z, d, y, c_proxy, d_target);
  }

 private:
  static bool is_binary(double v) { return v == 0.0 || v == 1.0; }

  void check_rows() const {
    const Eigen::Index m = units();
    for (Eigen::Index i = 0; i < m; ++i) {
      const long row = i + 1;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (!std::isfinite(x(i, j))) {
          throw Error(errc::non_finite_value, "covariate must be finite", row,
                      "x" + std::to_string(j + 1));
        }
      }
      if (!is_binary(s[i])) {
        throw Error(errc::non_binary_indicator, "sample indicator must be 0/1",
                    row, "s");
      }
      if (s[i] == 1.0) {
        if (is_missing(z[i]))
          throw Error(errc::missing_value, "study row lacks z", row, "z");
        if (is_missing(d[i]))
          throw Error(errc::missing_value, "study row lacks d", row, "d");
        if (is_missing(y[i]))
          throw Error(errc::missing_value, "study row lacks y", row, "y");
        if (!is_binary(z[i]))
          throw Error(errc::non_binary_indicator, "assignment must be 0/1", row,
                      "z");
        if (!is_binary(d[i]))
          throw Error(errc::non_binary_indicator, "receipt must be 0/1", row,
                      "d");
        if (!std::isfinite(y[i]))
          throw Error(errc::non_finite_value, "outcome must be finite", row,
                      "y");
      } else {
        if (!is_missing(y[i]))
          throw Error(errc::unexpected_outcome_on_target,
                      "outcome recorded on a target row", row, "y");
        if (!is_missing(z[i]) && !is_binary(z[i]))
          throw Error(errc::non_binary_indicator, "assignment must be 0/1", row,
                      "z");
        if (!is_missing(d_target[i]) && !is_binary(d_target[i]))
          throw Error(errc::non_binary_indicator, "receipt must be 0/1", row,
                      "d_target");
        if (!is_missing(c_proxy[i]) && !is_binary(c_proxy[i]))
          throw Error(errc::non_binary_indicator,
                      "compliance proxy must be 0/1", row, "c_proxy");
      }
    }
  }

  void build_index() {
    study_rows.clear();
    target_rows.clear();
    treated_rows.clear();
    control_rows.clear();
    for (Eigen::Index i = 0; i < units(); ++i) {
      if (s[i] == 1.0) {
        study_rows.push_back(i);
        (z[i] == 1.0 ? treated_rows : control_rows).push_back(i);
      } else {
        target_rows.push_back(i);
      }
    }
    if (n() < 2) {
      throw Error(errc::empty_arm, "need at least 2 study units, have " +
                                       std::to_string(n()));
    }
    if (treated_rows.empty()) {
      throw Error(errc::empty_arm, "no treated (z=1) study units");
    }
    if (control_rows.empty()) {
      throw Error(errc::empty_arm, "no control (z=0) study units");
    }
    if (big_n() < 1) {
      throw Error(errc::empty_arm, "no target (s=0) units");
    }
  }
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct ColumnSchema {
  std::string s = "s";
  std::string z = "z";
  std::string d = "d";
  std::string y = "y";
  std::string c_proxy = "c_proxy";
  std::string d_target = "d_target";
  // Explicit covariate column list; empty means auto-detect columns named
  // x1..xp (numeric suffix order).
  std::vector<std::string> covariates;
  bool add_intercept = true;
};

namespace detail {

inline std::string trim(std::string v) {
  const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!v.empty() && issp(v.back())) v.pop_back();
  std::size_t b = 0;
  while (b < v.size() && issp(v[b])) ++b;
  return v.substr(b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::optional<double> parse_cell(const std::string& cell, long row,
                                        const std::string& column) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw Error(errc::non_finite_value, "cannot parse '" + cell + "'", row,
                column);
  }
  return v;
}

inline double require_finite(std::optional<double> v, long row,
                             const std::string& column) {
  if (!v) throw Error(errc::missing_value, "cell is empty", row, column);
  if (!std::isfinite(*v)) {
    throw Error(errc::non_finite_value, "value is not finite", row, column);
  }
  return *v;
}

inline double require_binary(std::optional<double> v, long row,
                             const std::string& column) {
  if (!v) throw Error(errc::missing_value, "cell is empty", row, column);
  if (*v != 0.0 && *v != 1.0) {
    throw Error(errc::non_binary_indicator, "expected 0 or 1", row, column);
  }
  return *v;
}

}  // namespace detail

inline Dataset load_dataset(std::istream& in, const ColumnSchema& schema = {}) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(errc::io_error, "input has no header row");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (!col_of.emplace(header[j], j).second) {
      throw Error(errc::bad_config, "duplicate column '" + header[j] + "'", 1);
    }
  }
  auto find_col = [&](const std::string& name,
                      bool required) -> std::optional<std::size_t> {
    auto it = col_of.find(name);
    if (it != col_of.end()) return it->second;
    if (required) {
      throw Error(errc::missing_column, "header lacks required column", 1,
                  name);
    }
    return std::nullopt;
  };
  const std::size_t ci_s = *find_col(schema.s, true);
  const std::size_t ci_z = *find_col(schema.z, true);
  const std::size_t ci_d = *find_col(schema.d, true);
  const std::size_t ci_y = *find_col(schema.y, true);
  const std::optional<std::size_t> ci_cp = find_col(schema.c_proxy, false);
  const std::optional<std::size_t> ci_dt = find_col(schema.d_target, false);

  std::vector<std::pair<std::string, std::size_t>> xcols;
  if (!schema.covariates.empty()) {
    for (const std::string& name : schema.covariates) {
      xcols.emplace_back(name, *find_col(name, true));
    }
  } else {
    // auto-detect x<number> columns, ordered by the numeric suffix
    std::vector<std::pair<long, std::size_t>> found;
    for (std::size_t j = 0; j < header.size(); ++j) {
      const std::string& name = header[j];
      if (name.size() < 2 || name[0] != 'x') continue;
      bool digits = true;
      for (std::size_t k = 1; k < name.size(); ++k) {
        if (!std::isdigit(static_cast<unsigned char>(name[k]))) {
          digits = false;
          break;
        }
      }
      if (digits) found.emplace_back(std::stol(name.substr(1)), j);
    }
    std::sort(found.begin(), found.end());
    for (const auto& [num, j] : found) xcols.emplace_back(header[j], j);
  }

  std::vector<UnitRecord> records;
  Mat xraw;
  std::vector<Vec> xrows;
  long file_line = 1;
  while (std::getline(in, line)) {
    ++file_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(errc::io_error,
                  "expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(cells.size()),
                  file_line);
    }
    UnitRecord r;
    r.s = static_cast<int>(detail::require_binary(
        detail::parse_cell(cells[ci_s], file_line, schema.s), file_line,
        schema.s));
    const auto vz = detail::parse_cell(cells[ci_z], file_line, schema.z);
    const auto vd = detail::parse_cell(cells[ci_d], file_line, schema.d);
    const auto vy = detail::parse_cell(cells[ci_y], file_line, schema.y);
    if (r.s == 1) {
      r.z = static_cast<int>(detail::require_binary(vz, file_line, schema.z));
      r.d = static_cast<int>(detail::require_binary(vd, file_line, schema.d));
      r.y = detail::require_finite(vy, file_line, schema.y);
    } else {
      if (vy) {
        throw Error(errc::unexpected_outcome_on_target,
                    "outcome recorded on a target row", file_line, schema.y);
      }
      if (vz) {
        r.z = static_cast<int>(detail::require_binary(vz, file_line, schema.z));
      }
      // `d` on a target row is auxiliary treatment receipt
      if (vd) {
        r.d_target =
            static_cast<int>(detail::require_binary(vd, file_line, schema.d));
      }
      if (ci_dt) {
        const auto vdt =
            detail::parse_cell(cells[*ci_dt], file_line, schema.d_target);
        if (vdt) {
          const int dt = static_cast<int>(
              detail::require_binary(vdt, file_line, schema.d_target));
          if (r.d_target && *r.d_target != dt) {
            throw Error(errc::invalid_argument,
                        "d and d_target disagree on a target row", file_line,
                        schema.d_target);
          }
          r.d_target = dt;
        }
      }
      if (ci_cp) {
        const auto vcp =
            detail::parse_cell(cells[*ci_cp], file_line, schema.c_proxy);
        if (vcp) {
          r.c_proxy = static_cast<int>(
              detail::require_binary(vcp, file_line, schema.c_proxy));
        }
      }
    }
    Vec xv(static_cast<Eigen::Index>(xcols.size()));
    for (std::size_t j = 0; j < xcols.size(); ++j) {
      xv[static_cast<Eigen::Index>(j)] = detail::require_finite(
          detail::parse_cell(cells[xcols[j].second], file_line, xcols[j].first),
          file_line, xcols[j].first);
    }
    r.x = std::move(xv);
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    throw Error(errc::empty_input, "file contains no data rows");
  }
  if (schema.add_intercept) {
    Mat xm(static_cast<Eigen::Index>(records.size()), records.front().x.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].x.size() != xm.cols()) {
        throw Error(errc::dimension_mismatch, "ragged covariate rows",
                    static_cast<long>(i) + 2);
      }
      xm.row(static_cast<Eigen::Index>(i)) = records[i].x.transpose();
    }
    const Mat aug = augment_intercept(xm);
    for (std::size_t i = 0; i < records.size(); ++i) {
      records[i].x = aug.row(static_cast<Eigen::Index>(i)).transpose();
    }
  }
  return Dataset::from_records(records);
}

inline Dataset load_dataset(const std::string& path,
                            const ColumnSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) {
    throw Error(errc::io_error, "cannot open '" + path + "'");
  }
  return load_dataset(in, schema);
}

namespace detail {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, std::ostream& out) {
  const bool has_dt = (ds.d_target.array() == ds.d_target.array()).any();
  const bool has_cp = (ds.c_proxy.array() == ds.c_proxy.array()).any();
  out << "s,z,d,y";
  for (Eigen::Index j = 0; j < ds.p(); ++j) out << ",x" << (j + 1);
  if (has_dt) out << ",d_target";
  if (has_cp) out << ",c_proxy";
  out << "\n";
  auto cell = [](double v) {
    return is_missing(v) ? std::string() : detail::format_double(v);
  };
  for (Eigen::Index i = 0; i < ds.units(); ++i) {
    out << cell(ds.s[i]) << ',' << cell(ds.z[i]) << ',' << cell(ds.d[i]) << ','
        << cell(ds.y[i]);
    for (Eigen::Index j = 0; j < ds.p(); ++j) {
      out << ',' << detail::format_double(ds.x(i, j));
    }
    if (has_dt) out << ',' << cell(ds.d_target[i]);
    if (has_cp) out << ',' << cell(ds.c_proxy[i]);
    out << "\n";
  }
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(errc::io_error, "cannot open '" + path + "' for writing");
  }
  write_dataset(ds, out);
}

// ---------------------------------------------------------------------------
// Validation report
// ---------------------------------------------------------------------------

struct ValidationReport {
  Eigen::Index n = 0, big_n = 0, p = 0;
  Eigen::Index treated = 0, control = 0;
  bool tiny_arm = false;
  Vec x_min, x_max;
  Eigen::Index target_with_z = 0, target_with_d = 0, target_with_proxy = 0;
  std::string partial_compliance = "none";  // none | partial | full
  std::vector<std::string> flags;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["n"] = n;
    j["big_n"] = big_n;
    j["p"] = p;
    j["treated"] = treated;
    j["control"] = control;
    j["tiny_arm"] = tiny_arm;
    j["x_min"] = std::vector<double>(x_min.data(), x_min.data() + x_min.size());
    j["x_max"] = std::vector<double>(x_max.data(), x_max.data() + x_max.size());
    j["target_with_z"] = target_with_z;
    j["target_with_d"] = target_with_d;
    j["target_with_proxy"] = target_with_proxy;
    j["partial_compliance"] = partial_compliance;
    j["flags"] = flags;
    return j;
  }
};

inline ValidationReport validate(const Dataset& ds,
                                 Eigen::Index tiny_arm_threshold = 10) {
  ValidationReport r;
  r.n = ds.n();
  r.big_n = ds.big_n();
  r.p = ds.p();
  r.treated = static_cast<Eigen::Index>(ds.treated_rows.size());
  r.control = static_cast<Eigen::Index>(ds.control_rows.size());
  r.x_min = ds.x.colwise().minCoeff().transpose();
  r.x_max = ds.x.colwise().maxCoeff().transpose();
  if (r.treated < tiny_arm_threshold || r.control < tiny_arm_threshold) {
    r.tiny_arm = true;
    r.flags.push_back("TinyArm(treated=" + std::to_string(r.treated) +
                      ",control=" + std::to_string(r.control) + ")");
  }
  Eigen::Index with_both = 0;
  for (Eigen::Index i : ds.target_rows) {
    const bool has_z = !is_missing(ds.z[i]);
    const bool has_d = !is_missing(ds.d_target[i]);
    if (has_z) ++r.target_with_z;
    if (has_d) ++r.target_with_d;
    if (has_z && has_d) ++with_both;
    if (!is_missing(ds.c_proxy[i])) ++r.target_with_proxy;
  }
  if (with_both == ds.big_n()) {
    r.partial_compliance = "full";
  } else if (with_both > 0) {
    r.partial_compliance = "partial";
  }
  if (r.partial_compliance != "none") {
    r.flags.push_back("PartialComplianceAvailable=" + r.partial_compliance);
  }
  if (r.target_with_proxy > 0) {
    r.flags.push_back("ComplianceProxyAvailable");
  }
  return r;
}

}  // namespace tcace
