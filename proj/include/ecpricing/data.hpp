#pragma once

// Exogenous daily inputs: spot prices, outdoor temperature, PV reference
// production and per-prosumer baseload. CSV ingestion with strict hourly
// validation, CSV output, and a seeded synthetic generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ecpricing/errors.hpp"

namespace ecpricing {

struct ExogenousDay {
  std::string date;                          // YYYY-MM-DD
  std::vector<double> spot_price;            // DKK/kWh
  std::vector<double> outdoor_temp;          // degC
  double outdoor_temp_peak = 0.0;            // degC
  std::vector<double> pv_reference;          // kWh per kW installed
  std::vector<std::vector<double>> baseload; // [prosumer][t] kWh

  std::size_t horizon() const noexcept { return spot_price.size(); }

  void validate() const {
    const std::size_t T = horizon();
    auto bad = [&](const std::string& w) { throw InvalidArgument("day " + date + ": " + w); };
    if (T == 0) bad("empty horizon");
    if (outdoor_temp.size() != T || pv_reference.size() != T) bad("series lengths differ");
    for (std::size_t t = 0; t < T; ++t) {
      if (!(spot_price[t] >= 0.0) || !std::isfinite(spot_price[t])) bad("spot price must be finite and >= 0");
      if (!(pv_reference[t] >= 0.0) || !std::isfinite(pv_reference[t])) bad("PV reference must be finite and >= 0");
      if (!std::isfinite(outdoor_temp[t])) bad("non-finite temperature");
    }
    if (outdoor_temp_peak < *std::max_element(outdoor_temp.begin(), outdoor_temp.end())) bad("peak below hourly maximum");
    for (const auto& b : baseload) {
      if (b.size() != T) bad("baseload length differs from horizon");
      for (double v : b)
        if (!(v >= 0.0) || !std::isfinite(v)) bad("baseload must be finite and >= 0");
    }
  }
};

namespace csv {

struct Table {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw SchemaError(path, 1, std::string(name), "missing column '" + std::string(name) + "'");
  }
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline Table read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(path + ": cannot open file");
  Table t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw SchemaError(path, lineno, "*", "expected " + std::to_string(t.header.size()) + " fields, got " +
                                             std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw SchemaError(path + ": empty file");
  return t;
}

inline double parse_double(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  double v = 0.0;
  const auto* first = s.data() + (s.size() > 0 && s[0] == '+' ? 1 : 0);
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw SchemaError(t.path, row + 2, t.header[col], "not a finite number: '" + s + "'");
  return v;
}

inline std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace csv

namespace detail {

struct HourStamp {
  std::string date;
  int hour;
  friend bool operator==(const HourStamp&, const HourStamp&) = default;
};

/// Accepts YYYY-MM-DDTHH:MM[:SS][offset] (a space may replace the T).
inline HourStamp parse_stamp(const csv::Table& t, std::size_t row) {
  const std::string& s = t.rows[row][0];
  auto digits = [&](std::size_t a, std::size_t n) {
    for (std::size_t i = a; i < a + n; ++i)
      if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
  };
  const bool ok = s.size() >= 16 && digits(0, 4) && s[4] == '-' && digits(5, 2) && s[7] == '-' && digits(8, 2) &&
                  (s[10] == 'T' || s[10] == ' ') && digits(11, 2) && s[13] == ':' && digits(14, 2);
  if (!ok) throw SchemaError(t.path, row + 2, t.header[0], "not an ISO-8601 hourly timestamp: '" + s + "'");
  const int hour = std::stoi(s.substr(11, 2));
  if (hour > 23 || s.substr(14, 2) != "00")
    throw SchemaError(t.path, row + 2, t.header[0], "timestamp is not on the hour: '" + s + "'");
  return {s.substr(0, 10), hour};
}

/// Group rows into complete days of 24 consecutive hours.
inline std::vector<std::string> day_index(const csv::Table& t) {
  std::vector<std::string> dates;
  std::size_t row = 0;
  while (row < t.rows.size()) {
    const HourStamp first = parse_stamp(t, row);
    std::size_t n = 0;
    while (row + n < t.rows.size() && parse_stamp(t, row + n).date == first.date) {
      const HourStamp h = parse_stamp(t, row + n);
      if (h.hour != static_cast<int>(n))
        throw SchemaError(t.path, row + n + 2, t.header[0],
                          "day " + first.date + ": expected hour " + std::to_string(n) + ", found " + std::to_string(h.hour));
      ++n;
    }
    if (n != 24)
      throw SchemaError(t.path, row + n + 1, t.header[0], "day " + first.date + " has " + std::to_string(n) + " hours, expected 24");
    if (!dates.empty() && first.date <= dates.back())
      throw SchemaError(t.path, row + 2, t.header[0], "day " + first.date + " out of order or repeated");
    dates.push_back(first.date);
    row += n;
  }
  return dates;
}

}  // namespace detail

/// Load hourly CSV files into validated days. The price, temperature and PV
/// files must cover the same dates; the baseload file holds one day (24 rows)
/// with one column per prosumer after the timestamp and is used for every day.
inline std::vector<ExogenousDay> load_exogenous(const std::string& price_path, const std::string& temp_path,
                                                const std::string& pv_path, const std::string& baseload_path) {
  const auto price = csv::read(price_path), temp = csv::read(temp_path), pv = csv::read(pv_path),
             base = csv::read(baseload_path);
  const auto dates = detail::day_index(price);
  for (const auto* t : {&temp, &pv}) {
    if (detail::day_index(*t) != dates) throw SchemaError(t->path + ": dates do not match " + price_path);
  }
  if (base.rows.size() != 24) throw SchemaError(baseload_path + ": expected exactly 24 hourly rows (one day)");
  detail::day_index(base);
  if (base.header.size() < 2) throw SchemaError(baseload_path + ": no prosumer columns");

  const std::size_t cp = price.column("price_dkk_per_kwh"), ct = temp.column("temp_c"), cv = pv.column("pv_kwh_per_kw");
  std::vector<std::vector<double>> baseload(base.header.size() - 1, std::vector<double>(24));
  for (std::size_t h = 0; h < 24; ++h)
    for (std::size_t c = 1; c < base.header.size(); ++c) {
      const double v = csv::parse_double(base, h, c);
      if (v < 0.0) throw SchemaError(baseload_path, h + 2, base.header[c], "negative baseload");
      baseload[c - 1][h] = v;
    }

  std::vector<ExogenousDay> days;
  for (std::size_t d = 0; d < dates.size(); ++d) {
    ExogenousDay day;
    day.date = dates[d];
    for (std::size_t h = 0; h < 24; ++h) {
      const std::size_t r = d * 24 + h;
      day.spot_price.push_back(std::max(0.0, csv::parse_double(price, r, cp)));
      day.outdoor_temp.push_back(csv::parse_double(temp, r, ct));
      const double p = csv::parse_double(pv, r, cv);
      if (p < 0.0) throw SchemaError(pv_path, r + 2, pv.header[cv], "negative PV production");
      day.pv_reference.push_back(p);
    }
    day.outdoor_temp_peak = *std::max_element(day.outdoor_temp.begin(), day.outdoor_temp.end());
    day.baseload = baseload;
    day.validate();
    days.push_back(std::move(day));
  }
  return days;
}

/// Write the four CSV files read by load_exogenous.
inline void write_exogenous(const std::vector<ExogenousDay>& days, const std::string& price_path,
                            const std::string& temp_path, const std::string& pv_path, const std::string& baseload_path) {
  if (days.empty()) throw InvalidArgument("write_exogenous: no days");
  auto open = [](const std::string& p) {
    std::ofstream f(p);
    if (!f) throw Error("cannot open " + p + " for writing");
    return f;
  };
  auto stamp = [](const std::string& date, std::size_t h) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02zu:00", h);
    return date + "T" + buf;
  };
  auto fp = open(price_path), ft = open(temp_path), fv = open(pv_path), fb = open(baseload_path);
  fp << "timestamp,price_dkk_per_kwh\n";
  ft << "timestamp,temp_c\n";
  fv << "timestamp,pv_kwh_per_kw\n";
  for (const auto& d : days)
    for (std::size_t h = 0; h < d.horizon(); ++h) {
      fp << stamp(d.date, h) << ',' << csv::format(d.spot_price[h]) << '\n';
      ft << stamp(d.date, h) << ',' << csv::format(d.outdoor_temp[h]) << '\n';
      fv << stamp(d.date, h) << ',' << csv::format(d.pv_reference[h]) << '\n';
    }
  fb << "timestamp";
  for (std::size_t n = 0; n < days[0].baseload.size(); ++n) fb << ",prosumer_" << n;
  fb << '\n';
  for (std::size_t h = 0; h < days[0].horizon(); ++h) {
    fb << stamp(days[0].date, h);
    for (const auto& b : days[0].baseload) fb << ',' << csv::format(b[h]);
    fb << '\n';
  }
}

namespace detail {

/// Civil date from a day count since 1970-01-01 (proleptic Gregorian).
inline std::string civil_date(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const long doe = z - era * 146097;
  const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const long mp = (5 * doy + 2) / 153;
  const long d = doy - (153 * mp + 2) / 5 + 1;
  const long m = mp < 10 ? mp + 3 : mp - 9;
  const long y = yoe + era * 400 + (m <= 2);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04ld-%02ld-%02ld", y, m, d);
  return buf;
}

}  // namespace detail

/// Household baseload shapes: a night floor plus morning and evening peaks,
/// scaled per prosumer. Daily energy is roughly 6 to 14 kWh.
inline std::vector<std::vector<double>> synth_baseload(std::size_t prosumers, std::uint64_t seed,
                                                       std::size_t horizon = 24) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> scale(0.7, 1.4), shift(-1.0, 1.0), jitter(0.9, 1.1);
  std::vector<std::vector<double>> out;
  for (std::size_t n = 0; n < prosumers; ++n) {
    const double s = scale(rng), m = shift(rng), e = shift(rng);
    std::vector<double> b(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
      const double h = 24.0 * double(t) / double(horizon);
      const double morning = 0.35 * std::exp(-0.5 * std::pow((h - 7.5 - m) / 1.2, 2));
      const double evening = 0.6 * std::exp(-0.5 * std::pow((h - 18.5 - e) / 2.0, 2));
      b[t] = s * (0.22 + morning + evening) * jitter(rng);
    }
    out.push_back(std::move(b));
  }
  return out;
}

/// Seasonal synthetic year. Day 0 is 1 January of `year`. Prices follow a
/// two-peak daily shape with a winter premium, temperature a seasonal mean
/// plus afternoon swing, PV a clear-sky arc scaled by day length and a daily
/// cloud factor. Hourly horizon only.
inline std::vector<ExogenousDay> synth_exogenous(std::size_t days, std::size_t prosumers, std::uint64_t seed,
                                                 int year = 2023) {
  if (days == 0) throw InvalidArgument("synth_exogenous: days must be >= 1");
  constexpr double pi = std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> cloud(0.25, 1.0);
  const auto baseload = synth_baseload(prosumers, seed);

  long epoch = 0;
  for (int y = 1970; y < year; ++y) epoch += (y % 4 == 0 && (y % 100 != 0 || y % 400 == 0)) ? 366 : 365;

  std::vector<ExogenousDay> out;
  double level_noise = 0.0, temp_noise = 0.0;
  for (std::size_t d = 0; d < days; ++d) {
    ExogenousDay day;
    day.date = detail::civil_date(epoch + static_cast<long>(d));
    const double season = std::cos(2.0 * pi * (double(d % 365) - 15.0) / 365.0);  // +1 mid-January
    const double summer = 0.5 * (1.0 - season);
    level_noise = 0.7 * level_noise + 0.3 * 0.25 * z(rng);
    temp_noise = 0.6 * temp_noise + 0.4 * 2.5 * z(rng);
    const double price_level = std::max(0.2, 0.9 + 0.35 * season + level_noise);
    const double temp_mean = 8.5 - 8.5 * season + temp_noise;
    const double daylen = 12.0 - 5.0 * season;  // hours
    const double sun_peak = (0.15 + 0.6 * summer) * cloud(rng);

    for (int h = 0; h < 24; ++h) {
      const double shape = 0.75 + 0.35 * std::exp(-0.5 * std::pow((h - 8.0) / 1.5, 2)) +
                           0.55 * std::exp(-0.5 * std::pow((h - 18.0) / 2.0, 2)) -
                           0.2 * summer * std::exp(-0.5 * std::pow((h - 13.0) / 2.5, 2));
      day.spot_price.push_back(std::max(0.0, price_level * shape + 0.06 * z(rng)));
      day.outdoor_temp.push_back(temp_mean + (2.0 + 3.0 * summer) * std::cos(2.0 * pi * (h - 15.0) / 24.0) +
                                 0.4 * z(rng));
      const double x = (h + 0.5 - (12.5 - daylen / 2.0)) / daylen;
      day.pv_reference.push_back(x > 0.0 && x < 1.0 ? sun_peak * std::sin(pi * x) : 0.0);
    }
    day.outdoor_temp_peak = *std::max_element(day.outdoor_temp.begin(), day.outdoor_temp.end());
    day.baseload = baseload;
    day.validate();
    out.push_back(std::move(day));
  }
  return out;
}

}  // namespace ecpricing
