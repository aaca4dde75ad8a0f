#include "tabdpt/table_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"

namespace tabdpt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::string_view kTableMagic = "TDPT-TBL1";
constexpr std::uint32_t kTableVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
std::vector<std::optional<std::string>> split_record(std::string_view line) {
  std::vector<std::optional<std::string>> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      const auto t = trim(cur);
      fields.push_back(t.empty() && !was_quoted ? std::nullopt : std::optional<std::string>(t));
      cur.clear();
      was_quoted = false;
    } else {
      cur.push_back(c);
    }
  }
  const auto t = trim(cur);
  fields.push_back(t.empty() && !was_quoted ? std::nullopt : std::optional<std::string>(t));
  return fields;
}

struct ColumnStats {
  double mean = 0.0;
  double std = 0.0;
};

// Population mean/std over non-missing entries.
ColumnStats column_stats(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values)
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  if (n == 0) return {};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values)
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n))};
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Encoded (pre-standardization) values of a column under a given encoder.
std::vector<double> encode_column(const RawColumn& col, const ColumnEncoder& enc) {
  std::vector<double> out(col.cells.size(), kNaN);
  if (enc.kind == ColumnKind::numeric) {
    if (col.kind == ColumnKind::numeric) return col.numbers;
    for (std::size_t i = 0; i < col.cells.size(); ++i)
      if (col.cells[i])
        if (auto v = parse_number(*col.cells[i])) out[i] = *v;
    return out;
  }
  for (std::size_t i = 0; i < col.cells.size(); ++i) {
    if (!col.cells[i]) continue;
    const auto it = std::lower_bound(enc.categories.begin(), enc.categories.end(), *col.cells[i]);
    if (it != enc.categories.end() && *it == *col.cells[i])
      out[i] = static_cast<double>(it - enc.categories.begin());
  }
  return out;
}

ColumnEncoder fit_encoder(const RawColumn& col) {
  ColumnEncoder enc{col.name, col.kind, {}};
  if (col.kind == ColumnKind::categorical) {
    for (const auto& cell : col.cells)
      if (cell) enc.categories.push_back(*cell);
    std::sort(enc.categories.begin(), enc.categories.end());
    enc.categories.erase(std::unique(enc.categories.begin(), enc.categories.end()),
                         enc.categories.end());
  }
  return enc;
}

void fill_target(PreparedTable& out, const RawColumn& col, const std::vector<double>& encoded,
                 const std::vector<std::string>* class_names) {
  out.target_values.assign(encoded.size(), kNaN);
  if (out.target_kind == TaskKind::regression) {
    out.target_values = encoded;
    return;
  }
  if (class_names == nullptr) {
    // Fitting: class list is the sorted distinct values (categories, or numbers for numeric targets).
    if (col.kind == ColumnKind::categorical) {
      out.class_names = out.encoders[*out.target_col].categories;
    } else {
      std::vector<double> distinct;
      for (double v : encoded)
        if (!std::isnan(v)) distinct.push_back(v);
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      out.class_names.clear();
      for (double v : distinct) out.class_names.push_back(format_number(v));
    }
  } else {
    out.class_names = *class_names;
  }
  std::map<std::string, std::size_t> lookup;
  for (std::size_t c = 0; c < out.class_names.size(); ++c) lookup[out.class_names[c]] = c;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    if (!col.cells[i]) continue;
    const std::string key =
        col.kind == ColumnKind::categorical ? *col.cells[i] : format_number(encoded[i]);
    if (auto it = lookup.find(key); it != lookup.end())
      out.target_values[i] = static_cast<double>(it->second);
  }
}

PreparedTable build(const RawTable& raw, std::vector<ColumnEncoder> encoders,
                    std::optional<std::vector<ColumnStats>> stats, TaskKind target_kind,
                    const std::vector<std::string>* class_names) {
  const std::size_t n = raw.n_rows;
  const std::size_t f = raw.n_cols();
  PreparedTable out;
  out.source = raw.name;
  out.data = MatrixXdR::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  out.missing.setConstant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f), false);
  out.encoders = std::move(encoders);
  out.target_col = raw.target;
  out.target_kind = target_kind;
  out.col_means.resize(f);
  out.col_stds.resize(f);

  for (std::size_t j = 0; j < f; ++j) {
    const auto encoded = encode_column(raw.columns[j], out.encoders[j]);
    const ColumnStats st = stats ? (*stats)[j] : column_stats(encoded);
    out.col_means[j] = st.mean;
    out.col_stds[j] = st.std;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(j);
      if (std::isnan(encoded[i])) {
        out.missing(r, c) = true;
        continue;  // stays 0: mean imputation in standardized units
      }
      double z = st.std > 0.0 ? (encoded[i] - st.mean) / st.std : 0.0;
      out.data(r, c) = std::clamp(z, -kClipValue, kClipValue);
    }
    if (raw.target && *raw.target == j) fill_target(out, raw.columns[j], encoded, class_names);
  }
  return out;
}

}  // namespace

std::optional<std::size_t> RawTable::column_index(const std::string& column) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j].name == column) return j;
  return std::nullopt;
}

RawTable RawTable::from_matrix(std::string name, const std::vector<std::string>& column_names,
                               const MatrixXdR& values, std::optional<std::size_t> target) {
  if (column_names.size() != static_cast<std::size_t>(values.cols()))
    throw data_error("column name count does not match matrix width");
  RawTable t;
  t.name = std::move(name);
  t.n_rows = static_cast<std::size_t>(values.rows());
  t.target = target;
  for (std::size_t j = 0; j < column_names.size(); ++j) {
    RawColumn col{column_names[j], ColumnKind::numeric, {}, {}};
    col.cells.resize(t.n_rows);
    col.numbers.resize(t.n_rows);
    for (std::size_t i = 0; i < t.n_rows; ++i) {
      const double v = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      col.numbers[i] = std::isfinite(v) ? v : kNaN;
      if (std::isfinite(v)) col.cells[i] = format_number(v);
    }
    t.columns.push_back(std::move(col));
  }
  return t;
}

RawTable parse_csv(const std::string& text, std::string name,
                   const std::optional<std::string>& target_column) {
  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    if (nl == std::string_view::npos) {
      lines.push_back(rest);
      break;
    }
    lines.push_back(rest.substr(0, nl));
    rest.remove_prefix(nl + 1);
  }
  if (lines.empty()) throw data_error("empty CSV: missing header");

  const auto header = split_record(lines.front());
  RawTable t;
  t.name = std::move(name);
  for (std::size_t j = 0; j < header.size(); ++j)
    t.columns.push_back({header[j].value_or("col" + std::to_string(j)), ColumnKind::numeric, {}, {}});

  for (std::size_t li = 1; li < lines.size(); ++li) {
    auto fields = split_record(lines[li]);
    if (fields.size() != header.size())
      throw data_error("ragged row at line " + std::to_string(li + 1) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    for (std::size_t j = 0; j < fields.size(); ++j) t.columns[j].cells.push_back(std::move(fields[j]));
  }
  t.n_rows = lines.size() - 1;
  if (t.n_rows == 0) throw data_error("CSV has no data rows");

  for (auto& col : t.columns) {
    col.numbers.assign(t.n_rows, kNaN);
    for (std::size_t i = 0; i < t.n_rows; ++i) {
      if (!col.cells[i]) continue;
      if (auto v = parse_number(*col.cells[i])) {
        col.numbers[i] = *v;
      } else {
        col.kind = ColumnKind::categorical;
        col.numbers.clear();
        break;
      }
    }
  }
  if (target_column) {
    t.target = t.column_index(*target_column);
    if (!t.target) throw data_error("target column '" + *target_column + "' not in header");
  }
  return t;
}

RawTable load_csv(const std::filesystem::path& path, const std::optional<std::string>& target_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw data_error("read failure on " + path.string());
  return parse_csv(buf.str(), path.stem().string(), target_column);
}

PreparedTable prepare(const RawTable& raw, const PrepareOptions& opts) {
  if (raw.n_rows == 0 || raw.n_cols() == 0) throw data_error("prepare: table is empty");
  std::vector<ColumnEncoder> encoders;
  for (const auto& col : raw.columns) encoders.push_back(fit_encoder(col));
  TaskKind kind = TaskKind::regression;
  if (raw.target) {
    kind = raw.columns[*raw.target].kind == ColumnKind::categorical ? TaskKind::classification
                                                                     : TaskKind::regression;
    if (opts.target_kind) kind = *opts.target_kind;
  }
  return build(raw, std::move(encoders), std::nullopt, kind, nullptr);
}

PreparedTable transform(const PreparedTable& fitted, const RawTable& raw) {
  if (raw.n_cols() != fitted.n_cols()) throw data_error("transform: column count mismatch");
  for (std::size_t j = 0; j < raw.n_cols(); ++j)
    if (raw.columns[j].name != fitted.encoders[j].name)
      throw data_error("transform: column '" + raw.columns[j].name + "' does not match fitted '" +
                       fitted.encoders[j].name + "'");
  std::vector<ColumnStats> stats(fitted.n_cols());
  for (std::size_t j = 0; j < stats.size(); ++j) stats[j] = {fitted.col_means[j], fitted.col_stds[j]};
  RawTable with_target = raw;
  with_target.target = fitted.target_col;
  return build(with_target, fitted.encoders, stats, fitted.target_kind, &fitted.class_names);
}

std::vector<FoldSplit> make_folds(const PreparedTable& table, std::size_t k, std::uint64_t seed) {
  const std::size_t n = table.n_rows();
  if (k < 2) throw config_error("make_folds: k must be >= 2");
  if (k > n) throw data_error("make_folds: k=" + std::to_string(k) + " exceeds N=" + std::to_string(n));

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  if (table.target_col && table.target_kind == TaskKind::classification) {
    // Group by label (missing last); dealing consecutive positions round-robin keeps strata balanced.
    auto label = [&](std::size_t r) {
      const double v = table.target_values[r];
      return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return label(a) < label(b); });
  }

  std::vector<std::vector<std::size_t>> test(k);
  for (std::size_t p = 0; p < n; ++p) test[p % k].push_back(order[p]);

  std::vector<FoldSplit> folds;
  for (std::size_t fold = 0; fold < k; ++fold) {
    FoldSplit split{fold, {}, test[fold], seed};
    std::sort(split.test_rows.begin(), split.test_rows.end());
    std::vector<bool> in_test(n, false);
    for (auto r : split.test_rows) in_test[r] = true;
    for (std::size_t r = 0; r < n; ++r)
      if (!in_test[r]) split.train_rows.push_back(r);
    folds.push_back(std::move(split));
  }
  return folds;
}

SupervisedView supervised_view(const PreparedTable& table) {
  std::vector<std::size_t> rows(table.n_rows());
  std::iota(rows.begin(), rows.end(), 0);
  return supervised_view(table, rows);
}

SupervisedView supervised_view(const PreparedTable& table, const std::vector<std::size_t>& rows) {
  if (!table.target_col) throw data_error("table '" + table.source + "' has no designated target");
  const std::size_t tc = *table.target_col;
  SupervisedView view;
  view.kind = table.target_kind;
  view.num_classes = table.class_names.size();
  for (auto r : rows)
    if (r < table.n_rows() && !std::isnan(table.target_values[r])) view.row_ids.push_back(r);
  const auto f = static_cast<Eigen::Index>(table.n_cols() - 1);
  view.X.resize(static_cast<Eigen::Index>(view.row_ids.size()), f);
  view.y.reserve(view.row_ids.size());
  for (std::size_t i = 0; i < view.row_ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(view.row_ids[i]);
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < table.data.cols(); ++j)
      if (static_cast<std::size_t>(j) != tc) view.X(static_cast<Eigen::Index>(i), c++) = table.data(r, j);
    view.y.push_back(table.target_values[view.row_ids[i]]);
  }
  return view;
}

void save_table(const PreparedTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  io::Writer w(out);
  w.bytes(kTableMagic.data(), kTableMagic.size());
  w.put<std::uint32_t>(kTableVersion);
  w.put<std::uint64_t>(table.n_rows());
  w.put<std::uint64_t>(table.n_cols());
  w.str(table.source);
  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    const auto& enc = table.encoders[j];
    w.str(enc.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(enc.kind));
    w.put<double>(table.col_means[j]);
    w.put<double>(table.col_stds[j]);
    w.put<std::uint64_t>(enc.categories.size());
    for (const auto& c : enc.categories) w.str(c);
  }
  w.put<std::uint8_t>(table.target_col.has_value());
  w.put<std::uint64_t>(table.target_col.value_or(0));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(table.target_kind));
  w.put<std::uint64_t>(table.class_names.size());
  for (const auto& c : table.class_names) w.str(c);
  w.array(table.target_values);

  std::vector<float> data(table.n_rows() * table.n_cols());
  for (std::size_t i = 0; i < table.n_rows(); ++i)
    for (std::size_t j = 0; j < table.n_cols(); ++j)
      data[i * table.n_cols() + j] = static_cast<float>(
          table.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  w.array(data);

  std::vector<std::uint8_t> mask((data.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < table.n_rows(); ++i)
    for (std::size_t j = 0; j < table.n_cols(); ++j)
      if (table.missing(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) {
        const std::size_t bit = i * table.n_cols() + j;
        mask[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
      }
  w.array(mask);
  if (!out) throw data_error("write failure on " + path.string());
}

PreparedTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  io::Reader r(in);
  r.expect_magic(kTableMagic);
  if (const auto v = r.get<std::uint32_t>(); v != kTableVersion)
    throw data_error("unsupported table version " + std::to_string(v));
  const auto n = r.get<std::uint64_t>();
  const auto f = r.get<std::uint64_t>();
  PreparedTable t;
  t.source = r.str();
  for (std::uint64_t j = 0; j < f; ++j) {
    ColumnEncoder enc;
    enc.name = r.str();
    enc.kind = static_cast<ColumnKind>(r.get<std::uint8_t>());
    t.col_means.push_back(r.get<double>());
    t.col_stds.push_back(r.get<double>());
    const auto nc = r.get<std::uint64_t>();
    for (std::uint64_t c = 0; c < nc; ++c) enc.categories.push_back(r.str());
    t.encoders.push_back(std::move(enc));
  }
  const bool has_target = r.get<std::uint8_t>() != 0;
  const auto target_col = r.get<std::uint64_t>();
  if (has_target) t.target_col = target_col;
  t.target_kind = static_cast<TaskKind>(r.get<std::uint8_t>());
  const auto ncls = r.get<std::uint64_t>();
  for (std::uint64_t c = 0; c < ncls; ++c) t.class_names.push_back(r.str());
  t.target_values = r.array<double>();

  const auto data = r.array<float>();
  const auto mask = r.array<std::uint8_t>();
  if (data.size() != n * f || mask.size() != (n * f + 7) / 8) throw data_error("table payload size mismatch");
  t.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  t.missing.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const std::size_t bit = i * f + j;
      t.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[bit];
      t.missing(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (mask[bit / 8] >> (bit % 8)) & 1u;
    }
  return t;
}

}  // namespace tabdpt
