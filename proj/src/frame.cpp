#include "lfu/frame.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

namespace lfu {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::int32_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int32_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::label: return "label";
    case ColumnKind::timestamp: return "timestamp";
    case ColumnKind::id: return "id";
  }
  return "?";
}

ColumnKind parse_column_kind(std::string_view text) {
  text = trim(text);
  if (text == "categorical") return ColumnKind::categorical;
  if (text == "numeric") return ColumnKind::numeric;
  if (text == "label") return ColumnKind::label;
  if (text == "timestamp") return ColumnKind::timestamp;
  if (text == "id") return ColumnKind::id;
  throw ConfigError("unknown column kind '" + std::string(text) + "'");
}

// --- Schema -----------------------------------------------------------------

void Schema::validate() const {
  std::set<std::string> seen;
  int labels = 0;
  int stamps = 0;
  for (const auto& c : columns) {
    if (c.name.empty()) throw ConfigError("schema: empty column name");
    if (!seen.insert(c.name).second) throw ConfigError("schema: duplicate column '" + c.name + "'");
    labels += c.kind == ColumnKind::label;
    stamps += c.kind == ColumnKind::timestamp;
  }
  const int expected = secondary ? 0 : 1;
  if (labels != expected)
    throw ConfigError("schema: expected " + std::to_string(expected) + " label column(s), found " + std::to_string(labels));
  if (stamps != expected)
    throw ConfigError("schema: expected " + std::to_string(expected) + " timestamp column(s), found " +
                      std::to_string(stamps));
  if (label_positive == label_negative) throw ConfigError("schema: label tokens must differ");
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw DataError("no column named '" + std::string(name) + "'");
}

std::size_t Schema::label_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].kind == ColumnKind::label) return i;
  throw DataError("schema has no label column");
}

std::size_t Schema::timestamp_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].kind == ColumnKind::timestamp) return i;
  throw DataError("schema has no timestamp column");
}

std::vector<std::string> Schema::feature_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns)
    if (c.is_feature()) out.push_back(c.name);
  return out;
}

Schema parse_schema(std::string_view text) {
  Schema schema;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto eol = text.find('\n');
    std::string_view line = trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("schema line " + std::to_string(line_no) + ": expected 'name = kind'");
    std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (key == "@label_positive") {
      schema.label_positive = std::string(value);
    } else if (key == "@label_negative") {
      schema.label_negative = std::string(value);
    } else if (key == "@secondary") {
      if (value != "true" && value != "false")
        throw ConfigError("schema line " + std::to_string(line_no) + ": @secondary must be true or false");
      schema.secondary = value == "true";
    } else if (!key.empty() && key.front() == '@') {
      throw ConfigError("schema line " + std::to_string(line_no) + ": unknown option " + std::string(key));
    } else {
      ColumnSpec spec;
      spec.name = std::string(key);
      auto comma = value.find(',');
      spec.kind = parse_column_kind(value.substr(0, comma));
      spec.allow_missing = spec.is_feature();
      if (comma != std::string_view::npos) {
        auto flag = trim(value.substr(comma + 1));
        if (flag == "required") spec.allow_missing = false;
        else if (flag == "optional") spec.allow_missing = true;
        else throw ConfigError("schema line " + std::to_string(line_no) + ": unknown flag " + std::string(flag));
      }
      schema.columns.push_back(std::move(spec));
    }
  }
  schema.validate();
  return schema;
}

Schema load_schema(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("schema file not found: " + path.string());
  return parse_schema(read_file(path));
}

std::string format_schema(const Schema& schema) {
  std::string out = "@label_positive = " + schema.label_positive + "\n";
  out += "@label_negative = " + schema.label_negative + "\n";
  if (schema.secondary) out += "@secondary = true\n";
  for (const auto& c : schema.columns) {
    out += c.name + " = " + std::string(to_string(c.kind));
    if (c.is_feature() && !c.allow_missing) out += ", required";
    if (!c.is_feature() && c.allow_missing) out += ", optional";
    out += "\n";
  }
  return out;
}

// --- Column / Frame ---------------------------------------------------------

bool Column::missing(ColumnKind kind, std::size_t row) const {
  if (kind == ColumnKind::numeric) return std::isnan(values[row]);
  if (kind == ColumnKind::categorical || kind == ColumnKind::id) return codes[row] == kMissingCode;
  return false;
}

std::int32_t Column::intern(std::string_view token) {
  for (std::size_t i = 0; i < dictionary.size(); ++i)
    if (dictionary[i] == token) return static_cast<std::int32_t>(i);
  dictionary.emplace_back(token);
  return static_cast<std::int32_t>(dictionary.size() - 1);
}

Frame::Frame(Schema schema, std::vector<Column> columns, std::string partition)
    : schema_(std::move(schema)), columns_(std::move(columns)), partition_(std::move(partition)) {
  schema_.validate();
  if (columns_.size() != schema_.columns.size())
    throw InvariantError("frame: column count does not match schema");
  rows_ = columns_.empty() ? 0 : columns_[0].size(schema_.columns[0].kind);
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& spec = schema_.columns[c];
    const auto& col = columns_[c];
    if (col.size(spec.kind) != rows_) throw InvariantError("frame: ragged column '" + spec.name + "'");
    if (spec.kind == ColumnKind::label) {
      for (auto v : col.codes)
        if (v != 0 && v != 1) throw DataError("frame: label outside {0,1} in '" + spec.name + "'");
    }
    if (spec.kind == ColumnKind::categorical || spec.kind == ColumnKind::id) {
      const auto dict = static_cast<std::int32_t>(col.dictionary.size());
      for (auto v : col.codes)
        if (v < kMissingCode || v >= dict) throw InvariantError("frame: code out of range in '" + spec.name + "'");
    }
    if (!spec.allow_missing) {
      for (std::size_t r = 0; r < rows_; ++r)
        if (col.missing(spec.kind, r)) throw DataError("frame: missing value in required column '" + spec.name + "'");
    }
  }
}

Labels Frame::labels() const {
  const auto& codes = columns_[schema_.label_index()].codes;
  Labels y(static_cast<Index>(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) y[static_cast<Index>(i)] = codes[i];
  return y;
}

std::vector<std::int32_t> Frame::months() const { return columns_[schema_.timestamp_index()].codes; }

std::size_t Frame::positives() const {
  const auto& codes = columns_[schema_.label_index()].codes;
  return static_cast<std::size_t>(std::count(codes.begin(), codes.end(), 1));
}

std::string_view Frame::token(std::size_t col, std::size_t row) const {
  const auto& c = columns_[col];
  const auto code = c.codes[row];
  if (code == kMissingCode) return kMissingToken;
  return c.dictionary[static_cast<std::size_t>(code)];
}

Frame Frame::take(std::span<const std::size_t> rows) const {
  std::vector<Column> out(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& src = columns_[c];
    auto& dst = out[c];
    dst.dictionary = src.dictionary;
    if (schema_.columns[c].kind == ColumnKind::numeric) {
      dst.values.reserve(rows.size());
      for (auto r : rows) dst.values.push_back(src.values.at(r));
    } else {
      dst.codes.reserve(rows.size());
      for (auto r : rows) dst.codes.push_back(src.codes.at(r));
    }
  }
  return Frame(schema_, std::move(out), partition_);
}

Frame Frame::with_column(std::string_view name, Column column) const {
  auto cols = columns_;
  cols[schema_.index_of(name)] = std::move(column);
  return Frame(schema_, std::move(cols), partition_);
}

Frame Frame::with_partition(std::string partition) const {
  Frame out = *this;
  out.partition_ = std::move(partition);
  return out;
}

bool same_cells(const Frame& a, const Frame& b) {
  if (!(a.schema() == b.schema()) || a.rows() != b.rows()) return false;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const auto kind = a.schema().columns[c].kind;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      switch (kind) {
        case ColumnKind::numeric: {
          const double x = a.column(c).values[r];
          const double y = b.column(c).values[r];
          if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
          break;
        }
        case ColumnKind::categorical:
        case ColumnKind::id:
          if (a.token(c, r) != b.token(c, r)) return false;
          break;
        default:
          if (a.column(c).codes[r] != b.column(c).codes[r]) return false;
      }
    }
  }
  return true;
}

// --- CSV --------------------------------------------------------------------

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos && !field.empty()) return std::string(field);
  if (field.empty()) return "";
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

Frame parse_csv(std::string_view text, const Schema& schema) {
  schema.validate();
  // Records may span lines inside quotes; collect logical lines first.
  std::vector<std::string> records;
  {
    std::string cur;
    bool quoted = false;
    for (char ch : text) {
      if (ch == '"') quoted = !quoted;
      if (ch == '\n' && !quoted) {
        records.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) records.push_back(std::move(cur));
  }
  std::size_t first = 0;
  while (first < records.size() && (records[first].empty() || records[first][0] == '#')) ++first;
  if (first == records.size()) throw DataError("csv: no header row");
  const auto header = split_csv_line(records[first]);

  std::vector<std::size_t> source(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), schema.columns[c].name);
    if (it == header.end()) throw DataError("csv: header mismatch, column '" + schema.columns[c].name + "' not found");
    source[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<Column> cols(schema.columns.size());
  std::vector<std::unordered_map<std::string, std::int32_t>> lookup(schema.columns.size());
  std::size_t line_no = first + 1;
  for (std::size_t r = first + 1; r < records.size(); ++r) {
    ++line_no;
    if (trim(records[r]).empty()) continue;
    const auto fields = split_csv_line(records[r]);
    if (fields.size() != header.size())
      throw DataError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& spec = schema.columns[c];
      const std::string& cell = fields[source[c]];
      auto& col = cols[c];
      switch (spec.kind) {
        case ColumnKind::numeric:
          col.values.push_back(parse_double(cell).value_or(std::numeric_limits<double>::quiet_NaN()));
          break;
        case ColumnKind::label: {
          auto t = trim(cell);
          if (t == schema.label_positive) col.codes.push_back(1);
          else if (t == schema.label_negative) col.codes.push_back(0);
          else throw DataError("csv line " + std::to_string(line_no) + ": label token '" + std::string(t) + "' is neither '" +
                               schema.label_positive + "' nor '" + schema.label_negative + "'");
          break;
        }
        case ColumnKind::timestamp: {
          auto v = parse_int(cell);
          if (!v || *v < 0) throw DataError("csv line " + std::to_string(line_no) + ": bad month index '" + cell + "'");
          col.codes.push_back(*v);
          break;
        }
        case ColumnKind::categorical:
        case ColumnKind::id: {
          if (trim(cell).empty()) {
            col.codes.push_back(kMissingCode);
            break;
          }
          auto [it, inserted] = lookup[c].try_emplace(cell, static_cast<std::int32_t>(col.dictionary.size()));
          if (inserted) col.dictionary.push_back(cell);
          col.codes.push_back(it->second);
          break;
        }
      }
    }
  }
  Frame frame(schema, std::move(cols));
  if (frame.rows() == 0) throw DataError("csv: no data rows");
  return frame;
}

Frame load_csv(const std::filesystem::path& path, const Schema& schema) {
  if (!std::filesystem::exists(path)) throw DataError("csv file not found: " + path.string());
  return parse_csv(read_file(path), schema);
}

std::string format_csv(const Frame& frame) {
  const auto& schema = frame.schema();
  std::string out;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (c) out += ',';
    out += csv_escape(schema.columns[c].name);
  }
  out += '\n';
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (c) out += ',';
      const auto& col = frame.column(c);
      switch (schema.columns[c].kind) {
        case ColumnKind::numeric:
          if (!std::isnan(col.values[r])) out += format_double(col.values[r]);
          break;
        case ColumnKind::label:
          out += col.codes[r] ? schema.label_positive : schema.label_negative;
          break;
        case ColumnKind::timestamp:
          out += std::to_string(col.codes[r]);
          break;
        default:
          if (col.codes[r] != kMissingCode) out += csv_escape(frame.token(c, r));
      }
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Frame& frame, const std::filesystem::path& path, std::string_view comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  if (!comment.empty()) out << "# " << comment << '\n';
  out << format_csv(frame);
}

// --- merge / impute ---------------------------------------------------------

Frame merge_registers(std::span<const Frame> frames, std::string_view key) {
  if (frames.empty()) throw DataError("merge: no frames");
  auto key_index = [&](const Frame& f) {
    auto i = f.schema().find(key);
    if (!i) throw DataError("merge: key column '" + std::string(key) + "' absent");
    const auto kind = f.schema().columns[*i].kind;
    if (kind != ColumnKind::id && kind != ColumnKind::categorical)
      throw DataError("merge: key column must be an id column");
    return *i;
  };
  auto build_index = [&](const Frame& f, std::size_t k) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t r = 0; r < f.rows(); ++r) {
      if (f.missing(k, r)) throw DataError("merge: missing key in row " + std::to_string(r));
      if (!idx.emplace(std::string(f.token(k, r)), r).second)
        throw DataError("merge: duplicate key '" + std::string(f.token(k, r)) + "'");
    }
    return idx;
  };

  const Frame& spine = frames[0];
  if (spine.schema().secondary) throw DataError("merge: the first register must carry the label");
  const std::size_t spine_key = key_index(spine);
  build_index(spine, spine_key);

  Schema schema = spine.schema();
  std::vector<Column> cols = spine.columns();
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const Frame& other = frames[f];
    const std::size_t k = key_index(other);
    const auto idx = build_index(other, k);
    std::vector<std::optional<std::size_t>> match(spine.rows());
    for (std::size_t r = 0; r < spine.rows(); ++r) {
      auto it = idx.find(std::string(spine.token(spine_key, r)));
      if (it != idx.end()) match[r] = it->second;
    }
    for (std::size_t c = 0; c < other.cols(); ++c) {
      if (c == k) continue;
      auto spec = other.schema().columns[c];
      if (schema.find(spec.name)) throw DataError("merge: column '" + spec.name + "' appears in more than one register");
      if (!spec.is_feature()) throw DataError("merge: only feature columns may come from secondary registers");
      spec.allow_missing = true;
      const auto& src = other.column(c);
      Column dst;
      dst.dictionary = src.dictionary;
      for (std::size_t r = 0; r < spine.rows(); ++r) {
        if (spec.kind == ColumnKind::numeric)
          dst.values.push_back(match[r] ? src.values[*match[r]] : std::numeric_limits<double>::quiet_NaN());
        else
          dst.codes.push_back(match[r] ? src.codes[*match[r]] : kMissingCode);
      }
      schema.columns.push_back(std::move(spec));
      cols.push_back(std::move(dst));
    }
  }
  return Frame(std::move(schema), std::move(cols), spine.partition());
}

ImputeStats fit_impute(const Frame& train) {
  ImputeStats stats;
  for (std::size_t c = 0; c < train.cols(); ++c) {
    const auto& spec = train.schema().columns[c];
    if (spec.kind != ColumnKind::numeric) continue;
    double sum = 0.0;
    std::size_t count = 0;
    for (double v : train.column(c).values) {
      if (!std::isnan(v)) {
        sum += v;
        ++count;
      }
    }
    if (count == 0) throw DataError("impute: numeric column '" + spec.name + "' is entirely missing");
    stats.numeric_means[spec.name] = sum / static_cast<double>(count);
  }
  return stats;
}

Frame apply_impute(const Frame& frame, const ImputeStats& stats) {
  auto cols = frame.columns();
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    const auto& spec = frame.schema().columns[c];
    auto& col = cols[c];
    if (spec.kind == ColumnKind::numeric) {
      auto it = stats.numeric_means.find(spec.name);
      if (it == stats.numeric_means.end()) throw DataError("impute: no fill value for '" + spec.name + "'");
      for (double& v : col.values)
        if (std::isnan(v)) v = it->second;
    } else if (spec.kind == ColumnKind::categorical) {
      if (std::find(col.codes.begin(), col.codes.end(), kMissingCode) == col.codes.end()) continue;
      const auto code = col.intern(kMissingToken);
      for (auto& v : col.codes)
        if (v == kMissingCode) v = code;
    }
  }
  return Frame(frame.schema(), std::move(cols), frame.partition());
}

Frame impute(const Frame& frame) { return apply_impute(frame, fit_impute(frame)); }

// --- summary ----------------------------------------------------------------

SummaryStats summarize(const Frame& frame, std::span<const std::string> cohort_columns) {
  SummaryStats s;
  s.n = frame.rows();
  s.positives = frame.positives();
  s.prevalence = s.n ? static_cast<double>(s.positives) / static_cast<double>(s.n) : 0.0;
  std::size_t cells = 0;
  std::size_t missing = 0;
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    const auto& spec = frame.schema().columns[c];
    if (!spec.is_feature()) continue;
    std::size_t m = 0;
    for (std::size_t r = 0; r < frame.rows(); ++r) m += frame.missing(c, r);
    s.column_missingness[spec.name] = s.n ? static_cast<double>(m) / static_cast<double>(s.n) : 0.0;
    cells += frame.rows();
    missing += m;
  }
  s.missingness = cells ? static_cast<double>(missing) / static_cast<double>(cells) : 0.0;

  const auto& label = frame.column(frame.schema().label_index()).codes;
  for (const auto& name : cohort_columns) {
    const std::size_t c = frame.schema().index_of(name);
    const auto kind = frame.schema().columns[c].kind;
    std::map<std::string, CohortCount> groups;
    for (std::size_t r = 0; r < frame.rows(); ++r) {
      std::string key;
      if (kind == ColumnKind::timestamp || kind == ColumnKind::label) key = std::to_string(frame.column(c).codes[r]);
      else if (kind == ColumnKind::numeric) throw DataError("summarize: cohort column '" + name + "' is numeric");
      else key = std::string(frame.token(c, r));
      auto& g = groups[key];
      g.value = key;
      g.n += 1;
      g.positives += static_cast<std::size_t>(label[r]);
    }
    auto& out = s.cohorts[name];
    for (auto& [k, g] : groups) {
      g.prevalence = static_cast<double>(g.positives) / static_cast<double>(g.n);
      out.push_back(g);
    }
  }
  return s;
}

nlohmann::json to_json(const SummaryStats& stats) {
  nlohmann::json j;
  j["n"] = stats.n;
  j["positives"] = stats.positives;
  j["prevalence"] = stats.prevalence;
  j["missingness"] = {{"overall", stats.missingness}, {"columns", stats.column_missingness}};
  nlohmann::json cohorts = nlohmann::json::object();
  for (const auto& [name, rows] : stats.cohorts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& g : rows) arr.push_back({{"value", g.value}, {"n", g.n}, {"positives", g.positives}, {"prevalence", g.prevalence}});
    cohorts[name] = std::move(arr);
  }
  j["cohorts"] = std::move(cohorts);
  return j;
}

}  // namespace lfu
