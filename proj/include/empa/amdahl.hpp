#pragma once

// Amdahl efficiency E = 1 / (k(1-alpha) + alpha), its inversion to the
// imperfectness beta = 1 - alpha, supercomputer-record ingestion and a
// log-linear trend of beta over the years.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace empa::amdahl {

using Exact = boost::multiprecision::cpp_rational;

// Decimal text ("0.0597", "93014.6", "1e-7") to an exact rational.
std::optional<Exact> parse_decimal(std::string_view text);
double to_double(const Exact& value);

struct AmdahlPoint {
  Exact alpha;
  std::int64_t k = 1;
  Exact efficiency;
  Exact speedup;  // k * efficiency
  Exact beta;     // 1 - alpha
};

// DOMAIN unless 0 <= alpha <= 1 and k >= 1.
Exact efficiency(const Exact& alpha, std::int64_t k);
double efficiency(double alpha, double k);

// DOMAIN unless 0 < E <= 1 and k >= 2.
Exact imperfectness(const Exact& efficiency, std::int64_t k);
double imperfectness(double efficiency, double k);

AmdahlPoint point(const Exact& alpha, std::int64_t k);

struct MachineRecord {
  int year = 0;
  int rank = 0;
  std::string name;
  std::int64_t cores = 0;
  Exact rmax;   // TFlop/s
  Exact rpeak;  // TFlop/s
};

// E = rmax / rpeak. DOMAIN when rmax > rpeak or cores < 2.
AmdahlPoint from_record(const MachineRecord& record);

struct TrendFit {
  Exact slope;      // decades of beta per year
  Exact intercept;  // log10 beta at year 0
  Exact residual;   // sum of squared log10 residuals

  double log10_beta_at(double year) const;
  double beta_at(double year) const;
};

// Least squares on (year, log10 beta). Exact powers of ten contribute exact
// logarithms, so fits through such points are exact.
// DOMAIN for beta <= 0, UNDERDETERMINED for fewer than two distinct years.
TrendFit fit_trend(const std::vector<std::pair<int, Exact>>& points);

inline constexpr std::string_view kCsvHeader = "year,rank,name,cores,rmax_tflops,rpeak_tflops";

// HEADER_MISMATCH, PARSE (with line number).
std::vector<MachineRecord> parse_csv(std::string_view text);
// IO, then as parse_csv.
std::vector<MachineRecord> load_csv(const std::string& path);

// `year,beta,fit_beta`, one line per record; fit_beta is empty without a fit.
std::string beta_csv(const std::vector<MachineRecord>& records, const std::optional<TrendFit>& fit);

// Scientific notation with `digits` significant digits.
std::string format_sci(const Exact& value, int digits = 6);

}  // namespace empa::amdahl
