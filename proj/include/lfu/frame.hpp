#pragma once

#include "lfu/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lfu {

enum class ColumnKind { categorical, numeric, label, timestamp, id };

std::string_view to_string(ColumnKind kind);
ColumnKind parse_column_kind(std::string_view text);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::categorical;
  bool allow_missing = true;

  bool is_feature() const { return kind == ColumnKind::categorical || kind == ColumnKind::numeric; }
  bool operator==(const ColumnSpec&) const = default;
};

/// Column layout of a register. Exactly one label and one timestamp column,
/// except secondary registers, which carry neither and are merged onto a spine.
struct Schema {
  std::vector<ColumnSpec> columns;
  std::string label_positive = "1";
  std::string label_negative = "0";
  bool secondary = false;

  void validate() const;
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  const ColumnSpec& spec(std::string_view name) const { return columns[index_of(name)]; }
  std::size_t label_index() const;
  std::size_t timestamp_index() const;
  /// Categorical and numeric columns, in schema order.
  std::vector<std::string> feature_names() const;

  bool operator==(const Schema&) const = default;
};

/// Reads the plain-text manifest: one `name = kind[, required]` per line,
/// `@label_positive = tok` / `@label_negative = tok` / `@secondary = true`
/// options, `#` comments.
Schema load_schema(const std::filesystem::path& path);
Schema parse_schema(std::string_view text);
std::string format_schema(const Schema& schema);

inline constexpr std::int32_t kMissingCode = -1;
inline constexpr std::string_view kMissingToken = "__missing__";

/// One column of cells. Categorical and id columns use `codes` into
/// `dictionary`; label (0/1) and timestamp (month index) use `codes` directly;
/// numeric columns use `values` with NaN as the missing marker.
struct Column {
  std::vector<std::int32_t> codes;
  std::vector<double> values;
  std::vector<std::string> dictionary;

  std::size_t size(ColumnKind kind) const { return kind == ColumnKind::numeric ? values.size() : codes.size(); }
  bool missing(ColumnKind kind, std::size_t row) const;
  std::int32_t intern(std::string_view token);
};

/// Immutable columnar table of patient records.
class Frame {
 public:
  Frame() = default;
  Frame(Schema schema, std::vector<Column> columns, std::string partition = "");

  const Schema& schema() const { return schema_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return columns_.size(); }
  const Column& column(std::size_t i) const { return columns_[i]; }
  const Column& column(std::string_view name) const { return columns_[schema_.index_of(name)]; }
  const std::vector<Column>& columns() const { return columns_; }

  Labels labels() const;
  std::vector<std::int32_t> months() const;
  std::size_t positives() const;

  /// Token of a categorical/id cell; kMissingToken for the missing marker.
  std::string_view token(std::size_t col, std::size_t row) const;
  std::string_view token(std::string_view col, std::size_t row) const { return token(schema_.index_of(col), row); }
  bool missing(std::size_t col, std::size_t row) const { return columns_[col].missing(schema_.columns[col].kind, row); }

  /// Rows in the given order (repeats allowed).
  Frame take(std::span<const std::size_t> rows) const;
  Frame with_column(std::string_view name, Column column) const;
  Frame with_partition(std::string partition) const;

  /// Split name this frame was cut from ("pes", "modeling", "train", ...).
  const std::string& partition() const { return partition_; }

 private:
  Schema schema_;
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
  std::string partition_;
};

/// Cell-by-cell equality (tokens, not codes; NaN == NaN).
bool same_cells(const Frame& a, const Frame& b);

Frame load_csv(const std::filesystem::path& path, const Schema& schema);
Frame parse_csv(std::string_view text, const Schema& schema);
void write_csv(const Frame& frame, const std::filesystem::path& path, std::string_view comment = "");
std::string format_csv(const Frame& frame);

/// Splits one CSV record; handles quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

/// Left join of every frame onto the first on a unique key column.
Frame merge_registers(std::span<const Frame> frames, std::string_view key);

/// Per-column fill values learned from training rows.
struct ImputeStats {
  std::map<std::string, double> numeric_means;
};

ImputeStats fit_impute(const Frame& train);
Frame apply_impute(const Frame& frame, const ImputeStats& stats);
/// Numeric missing -> column mean, categorical missing -> kMissingToken.
Frame impute(const Frame& frame);

struct CohortCount {
  std::string value;
  std::size_t n = 0;
  std::size_t positives = 0;
  double prevalence = 0.0;
};

struct SummaryStats {
  std::size_t n = 0;
  std::size_t positives = 0;
  double prevalence = 0.0;
  /// Fraction of missing cells over all feature cells.
  double missingness = 0.0;
  std::map<std::string, double> column_missingness;
  std::map<std::string, std::vector<CohortCount>> cohorts;
};

SummaryStats summarize(const Frame& frame, std::span<const std::string> cohort_columns);
nlohmann::json to_json(const SummaryStats& stats);

// --- synthetic register -----------------------------------------------------

struct SynthConfig {
  std::size_t n = 100000;
  int months = 12;
  int districts = 40;
  int tbus = 150;
  int phis = 500;
  double prevalence_first_half = 0.0342;
  double prevalence_second_half = 0.0278;
  double missing_rate = 0.0917;
  int noise_columns = 3;
  /// Scale of the risk carried by facility-kind words inside PHI names.
  double phi_name_signal = 1.0;
  /// Scale of the per-district random effects.
  double district_signal = 1.0;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Coefficients used to draw labels, plus each row's true probability.
struct GroundTruth {
  std::map<std::string, std::map<std::string, double>> coefficients;
  std::vector<double> base_logit;  // per month
  std::uint64_t seed = 0;
  Vector probability;

  /// Planted age effect on the logit scale.
  static double age_effect(double age);
};

nlohmann::json to_json(const GroundTruth& truth);

struct Synthesized {
  Frame frame;
  GroundTruth truth;
};

Schema synth_schema(const SynthConfig& config);
Synthesized synthesize(const SynthConfig& config, std::uint64_t seed);

}  // namespace lfu
