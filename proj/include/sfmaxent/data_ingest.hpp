#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sfmaxent/maxent_models.hpp"

namespace sfmaxent {

struct Place {
  std::string id;
  std::string name;

  bool operator==(const Place&) const = default;
};

/// Places with populations across one or more observation years.
/// Populations are positive integers; a (place, year) pair may be absent.
class SnapshotSeries {
 public:
  explicit SnapshotSeries(std::vector<int> years);

  void add_place(Place place);
  void set_population(std::string_view place_id, int year, std::uint64_t population);

  const std::vector<Place>& places() const noexcept { return places_; }
  const std::vector<int>& years() const noexcept { return years_; }
  bool has_year(int year) const;
  std::optional<std::uint64_t> population(std::string_view place_id, int year) const;

  /// (place_id, population) for every place present in `year`, place order.
  std::vector<std::pair<std::string, double>> entries(int year) const;
  std::vector<double> values(int year) const;

  bool operator==(const SnapshotSeries& other) const;

 private:
  std::size_t year_index(int year) const;
  std::size_t place_index(std::string_view id) const;

  std::vector<int> years_;
  std::vector<Place> places_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::uint64_t>> populations_;  // [place][year], 0 = absent
};

/// Maps the columns of a wide census-style table onto a series.
struct ColumnSchema {
  std::string id_column;
  std::string name_column;  // optional; empty means "use the id"
  std::map<int, std::string> year_columns;

  /// Reads `id_column`, `name_column` and `year.<YYYY> = <column>` keys.
  static ColumnSchema from_config(const std::map<std::string, std::string>& kv);
};

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split_csv_record(std::string_view line, std::size_t line_no = 0);

SnapshotSeries parse_population_csv(std::istream& in, const ColumnSchema& schema);
SnapshotSeries parse_population_csv(const std::filesystem::path& path, const ColumnSchema& schema);

/// Canonical long format: place_id,name,year,population.
SnapshotSeries parse_long_csv(std::istream& in);
void write_long_csv(const SnapshotSeries& series, std::ostream& out);
inline constexpr std::string_view kLongCsvHeader = "place_id,name,year,population";

/// Restriction to places with populations in both t1 and t2, order kept.
SnapshotSeries common_places(const SnapshotSeries& series, int t1, int t2);

/// First-year populations drawn from the model; later years evolve each
/// place by u += Normal(0, K * years_elapsed). Rounded to integers, min 1.
SnapshotSeries synthesize_fixture(const EquilibriumModel& model, std::size_t n_places, std::vector<int> years,
                                  double K, std::uint64_t seed);

}  // namespace sfmaxent
