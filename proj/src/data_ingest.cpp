#include "sfmaxent/data_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "sfmaxent/errors.hpp"

namespace sfmaxent {

SnapshotSeries::SnapshotSeries(std::vector<int> years) : years_(std::move(years)) {
  if (years_.empty()) throw std::invalid_argument("a series needs at least one year");
  for (std::size_t i = 1; i < years_.size(); ++i) {
    if (years_[i] <= years_[i - 1]) throw std::invalid_argument("years must be strictly increasing");
  }
}

std::size_t SnapshotSeries::year_index(int year) const {
  auto it = std::lower_bound(years_.begin(), years_.end(), year);
  if (it == years_.end() || *it != year) throw std::out_of_range("year " + std::to_string(year) + " not in series");
  return static_cast<std::size_t>(it - years_.begin());
}

std::size_t SnapshotSeries::place_index(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw std::out_of_range("unknown place id: " + std::string(id));
  return it->second;
}

bool SnapshotSeries::has_year(int year) const { return std::binary_search(years_.begin(), years_.end(), year); }

void SnapshotSeries::add_place(Place place) {
  if (place.id.empty()) throw std::invalid_argument("place id must not be empty");
  auto [it, inserted] = index_.emplace(place.id, places_.size());
  if (!inserted) throw std::invalid_argument("duplicate place id: " + place.id);
  places_.push_back(std::move(place));
  populations_.emplace_back(years_.size(), 0);
}

void SnapshotSeries::set_population(std::string_view place_id, int year, std::uint64_t population) {
  if (population == 0) throw std::invalid_argument("populations must be positive");
  populations_[place_index(place_id)][year_index(year)] = population;
}

std::optional<std::uint64_t> SnapshotSeries::population(std::string_view place_id, int year) const {
  const auto v = populations_[place_index(place_id)][year_index(year)];
  if (v == 0) return std::nullopt;
  return v;
}

std::vector<std::pair<std::string, double>> SnapshotSeries::entries(int year) const {
  const std::size_t y = year_index(year);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t p = 0; p < places_.size(); ++p) {
    if (populations_[p][y] != 0) out.emplace_back(places_[p].id, static_cast<double>(populations_[p][y]));
  }
  return out;
}

std::vector<double> SnapshotSeries::values(int year) const {
  std::vector<double> out;
  for (auto& [id, v] : entries(year)) out.push_back(v);
  return out;
}

bool SnapshotSeries::operator==(const SnapshotSeries& other) const {
  return years_ == other.years_ && places_ == other.places_ && populations_ == other.populations_;
}

ColumnSchema ColumnSchema::from_config(const std::map<std::string, std::string>& kv) {
  ColumnSchema s;
  for (const auto& [key, value] : kv) {
    if (key == "id_column") {
      s.id_column = value;
    } else if (key == "name_column") {
      s.name_column = value;
    } else if (key.rfind("year.", 0) == 0) {
      const std::string y = key.substr(5);
      int year = 0;
      auto [ptr, ec] = std::from_chars(y.data(), y.data() + y.size(), year);
      if (ec != std::errc{} || ptr != y.data() + y.size()) throw ConfigError("bad year key: " + key);
      s.year_columns[year] = value;
    }
  }
  if (s.id_column.empty()) throw ConfigError("schema needs id_column");
  if (s.year_columns.empty()) throw ConfigError("schema needs at least one year.<YYYY> column");
  return s;
}

std::vector<std::string> split_csv_record(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool field_was_quoted = false;
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
      if (!cur.empty() || field_was_quoted) throw ParseError("stray quote inside field", line_no);
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      field_was_quoted = false;
    } else if (c == '\r' && i + 1 == line.size()) {
      break;
    } else {
      if (field_was_quoted) throw ParseError("text after closing quote", line_no);
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  fields.push_back(std::move(cur));
  return fields;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

// Empty or "0" means absent; anything else must be a positive integer.
std::optional<std::uint64_t> parse_population(std::string_view raw, std::size_t line_no) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError("population is not a nonnegative integer: '" + s + "'", line_no);
  }
  if (v == 0) return std::nullopt;
  return v;
}

std::size_t column_of(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("missing column: " + name);
  return static_cast<std::size_t>(it - header.begin());
}

bool blank(std::string_view line) { return line.find_first_not_of(" \t\r") == std::string_view::npos; }

}  // namespace

SnapshotSeries parse_population_csv(std::istream& in, const ColumnSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty input: header row required");
  ++line_no;
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_record(line, line_no);
  for (auto& h : header) h = trim(h);

  const std::size_t id_col = column_of(header, schema.id_column);
  const std::optional<std::size_t> name_col =
      schema.name_column.empty() ? std::nullopt : std::optional(column_of(header, schema.name_column));
  std::vector<std::pair<int, std::size_t>> year_cols;
  std::vector<int> years;
  for (const auto& [year, col] : schema.year_columns) {
    year_cols.emplace_back(year, column_of(header, col));
    years.push_back(year);
  }

  SnapshotSeries series(years);
  std::size_t usable = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split_csv_record(line, line_no);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    Place place{trim(fields[id_col]), name_col ? trim(fields[*name_col]) : trim(fields[id_col])};
    if (place.id.empty()) throw ParseError("empty place id", line_no);
    const std::string id = place.id;
    try {
      series.add_place(std::move(place));
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
    bool any = false;
    for (const auto& [year, col] : year_cols) {
      if (auto pop = parse_population(fields[col], line_no)) {
        series.set_population(id, year, *pop);
        any = true;
      }
    }
    usable += any ? 1 : 0;
  }
  if (usable == 0) throw ParseError("no usable rows");
  return series;
}

SnapshotSeries parse_population_csv(const std::filesystem::path& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_population_csv(in, schema);
}

SnapshotSeries parse_long_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty input: header row required");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kLongCsvHeader) throw ParseError("expected header '" + std::string(kLongCsvHeader) + "'", 1);

  struct Row {
    std::string id, name;
    int year;
    std::uint64_t pop;
    std::size_t line_no;
  };
  std::vector<Row> rows;
  std::vector<int> years;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto f = split_csv_record(line, line_no);
    if (f.size() != 4) throw ParseError("expected 4 fields", line_no);
    int year = 0;
    const std::string ys = trim(f[2]);
    auto [ptr, ec] = std::from_chars(ys.data(), ys.data() + ys.size(), year);
    if (ec != std::errc{} || ptr != ys.data() + ys.size()) throw ParseError("bad year '" + ys + "'", line_no);
    const auto pop = parse_population(f[3], line_no);
    rows.push_back({trim(f[0]), f[1], year, pop.value_or(0), line_no});
    years.push_back(year);
  }
  if (rows.empty()) throw ParseError("no usable rows");
  std::sort(years.begin(), years.end());
  years.erase(std::unique(years.begin(), years.end()), years.end());

  SnapshotSeries series(years);
  std::unordered_map<std::string, std::string> names;
  for (const auto& r : rows) {
    if (r.id.empty()) throw ParseError("empty place id", r.line_no);
    auto [it, inserted] = names.emplace(r.id, r.name);
    if (inserted) {
      series.add_place({r.id, r.name});
    } else if (it->second != r.name) {
      throw ParseError("place " + r.id + " has conflicting names", r.line_no);
    }
    if (r.pop == 0) continue;
    if (series.population(r.id, r.year)) throw ParseError("duplicate (place, year) row", r.line_no);
    series.set_population(r.id, r.year, r.pop);
  }
  return series;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_long_csv(const SnapshotSeries& series, std::ostream& out) {
  out << kLongCsvHeader << '\n';
  for (const auto& place : series.places()) {
    for (int year : series.years()) {
      if (auto pop = series.population(place.id, year)) {
        out << csv_field(place.id) << ',' << csv_field(place.name) << ',' << year << ',' << *pop << '\n';
      }
    }
  }
}

SnapshotSeries common_places(const SnapshotSeries& series, int t1, int t2) {
  if (!series.has_year(t1) || !series.has_year(t2)) throw std::out_of_range("both years must be in the series");
  SnapshotSeries out(series.years());
  for (const auto& place : series.places()) {
    if (!series.population(place.id, t1) || !series.population(place.id, t2)) continue;
    out.add_place(place);
    for (int year : series.years()) {
      if (auto pop = series.population(place.id, year)) out.set_population(place.id, year, *pop);
    }
  }
  if (out.places().empty()) {
    throw std::invalid_argument("no place has populations in both " + std::to_string(t1) + " and " +
                                std::to_string(t2));
  }
  return out;
}

SnapshotSeries synthesize_fixture(const EquilibriumModel& model, std::size_t n_places, std::vector<int> years,
                                  double K, std::uint64_t seed) {
  if (n_places == 0) throw std::invalid_argument("fixture needs at least one place");
  if (!(K >= 0.0)) throw std::invalid_argument("K must be nonnegative");
  std::sort(years.begin(), years.end());
  SnapshotSeries series(years);

  const auto latent = sample(model, n_places, seed);
  std::vector<double> u(n_places);
  std::transform(latent.begin(), latent.end(), u.begin(), [](double x) { return std::log(x); });

  boost::random::mt19937 engine(static_cast<std::uint32_t>(seed ^ (seed >> 32) ^ 0x5bd1e995u));
  boost::random::normal_distribution<double> normal(0.0, 1.0);

  const int width = static_cast<int>(std::to_string(n_places).size());
  for (std::size_t p = 0; p < n_places; ++p) {
    std::string num = std::to_string(p + 1);
    series.add_place({"P" + std::string(width - static_cast<int>(num.size()), '0') + num,
                      "Place " + std::to_string(p + 1)});
  }
  constexpr double kMaxPopulation = 0x1.0p62;
  for (std::size_t y = 0; y < years.size(); ++y) {
    if (y > 0) {
      const double sd = std::sqrt(K * (years[y] - years[y - 1]));
      if (sd > 0.0) {
        for (double& v : u) v += sd * normal(engine);
      }
    }
    for (std::size_t p = 0; p < n_places; ++p) {
      const double x = std::clamp(std::round(std::exp(u[p])), 1.0, kMaxPopulation);
      series.set_population(series.places()[p].id, years[y], static_cast<std::uint64_t>(x));
    }
  }
  return series;
}

}  // namespace sfmaxent
