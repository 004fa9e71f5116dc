#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "empa/amdahl.hpp"
#include "empa/error.hpp"

using namespace empa;
using namespace empa::amdahl;

namespace {

Exact q(const char* text) { return *parse_decimal(text); }

Exact frac(std::int64_t n, std::int64_t d) { return Exact(n) / Exact(d); }

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return Errc::Io;
}

std::string sample_path() { return std::string(EMPA_SOURCE_DIR) + "/data/top500_sample.csv"; }

// Inversion carried out in extended precision, independent of the library.
long double beta_by_hand(long double cores, long double rmax, long double rpeak) {
  const long double e = rmax / rpeak;
  return (1.0L / e - 1.0L) / (cores - 1.0L);
}

}  // namespace

TEST_CASE("decimal parsing is exact") {
  CHECK(q("0.0597") == frac(597, 10000));
  CHECK(q("93014.6") == frac(930146, 10));
  CHECK(q("1e-7") == frac(1, 10000000));
  CHECK(q("-2.5E2") == Exact(-250));
  CHECK(q("42") == Exact(42));
  for (const char* bad : {"", "1.2.3", "abc", "1e", "--1", "0x10"}) CHECK_FALSE(parse_decimal(bad).has_value());
}

TEST_CASE("efficiency examples") {
  CHECK(efficiency(Exact(1), 1000) == Exact(1));
  CHECK(efficiency(frac(3, 7), 1) == Exact(1));
  CHECK(efficiency(q("0.999"), 1000) == Exact(1) / q("1.999"));
  CHECK(to_double(efficiency(q("0.999"), 1000)) == doctest::Approx(0.50025).epsilon(1e-5));
  CHECK(efficiency(Exact(0), 10) == frac(1, 10));
  CHECK(error_of([] { (void)efficiency(Exact(2), 4); }) == Errc::Domain);
  CHECK(error_of([] { (void)efficiency(Exact(-1), 4); }) == Errc::Domain);
  CHECK(error_of([] { (void)efficiency(Exact(1), 0); }) == Errc::Domain);
  CHECK(error_of([] { (void)efficiency(0.5, 0.5); }) == Errc::Domain);
}

TEST_CASE("imperfectness examples") {
  CHECK(imperfectness(Exact(1), 5) == Exact(0));
  CHECK(imperfectness(Exact(1) / q("1.99"), 100) == q("0.01"));
  CHECK(error_of([] { (void)imperfectness(Exact(0), 5); }) == Errc::Domain);
  CHECK(error_of([] { (void)imperfectness(q("1.01"), 5); }) == Errc::Domain);
  CHECK(error_of([] { (void)imperfectness(q("0.5"), 1); }) == Errc::Domain);
  CHECK(error_of([] { (void)imperfectness(0.5, 1.0); }) == Errc::Domain);

  const AmdahlPoint p = point(q("0.99"), 100);
  CHECK(p.efficiency == Exact(1) / q("1.99"));
  CHECK(p.speedup == Exact(100) / q("1.99"));
  CHECK(p.beta == q("0.01"));
}

TEST_CASE("Sunway record inverts to about 3.3e-8") {
  const MachineRecord sunway{2016, 1, "Sunway TaihuLight", 10649600, q("93014.6"), q("125435.9")};
  const AmdahlPoint p = from_record(sunway);
  const double beta = to_double(p.beta);
  CHECK(beta >= 3.1e-8);
  CHECK(beta <= 3.5e-8);
  const long double oracle = beta_by_hand(10649600.0L, 93014.6L, 125435.9L);
  CHECK(std::fabs(static_cast<long double>(beta) - oracle) / oracle < 1e-12L);
  CHECK(p.efficiency == q("93014.6") / q("125435.9"));
  CHECK(p.alpha == Exact(1) - p.beta);
  CHECK(format_sci(p.beta, 3) == "3.27e-08");
}

TEST_CASE("record domain checks") {
  CHECK(from_record({2000, 1, "flat", 64, q("5"), q("5")}).beta == Exact(0));
  CHECK(error_of([] { (void)from_record({2000, 1, "solo", 1, q("1"), q("2")}); }) == Errc::Domain);
  CHECK(error_of([] { (void)from_record({2000, 1, "over", 8, q("3"), q("2")}); }) == Errc::Domain);
}

TEST_CASE("two-point trend fit through the figure's anchors") {
  const TrendFit fit = fit_trend({{1993, q("1e-3")}, {2016, q("1e-7")}});
  CHECK(fit.slope == frac(-4, 23));
  CHECK(fit.residual == Exact(0));
  CHECK(fit.log10_beta_at(1993) == doctest::Approx(-3.0));
  CHECK(fit.log10_beta_at(2016) == doctest::Approx(-7.0));
  CHECK(fit.beta_at(2016) == doctest::Approx(1e-7));
}

TEST_CASE("trend fit edge cases") {
  const TrendFit flat = fit_trend({{1990, q("0.002")}, {2000, q("0.002")}, {2010, q("0.002")}});
  CHECK(flat.slope == Exact(0));
  // Collinear in log space.
  const TrendFit three = fit_trend({{2000, q("1e-2")}, {2005, q("1e-4")}, {2010, q("1e-6")}});
  CHECK(three.slope == frac(-2, 5));
  CHECK(three.residual == Exact(0));
  CHECK(error_of([] { (void)fit_trend({{2000, q("1e-2")}}); }) == Errc::Underdetermined);
  CHECK(error_of([] { (void)fit_trend({{2000, q("1e-2")}, {2000, q("1e-3")}}); }) == Errc::Underdetermined);
  CHECK(error_of([] { (void)fit_trend({{2000, q("1e-2")}, {2001, Exact(0)}}); }) == Errc::Domain);
}

TEST_CASE("least squares on scattered points") {
  // log10 betas -2, -4, -3 at years 0, 1, 2: slope -1/2.
  const TrendFit fit = fit_trend({{0, q("1e-2")}, {1, q("1e-4")}, {2, q("1e-3")}});
  CHECK(fit.slope == frac(-1, 2));
  CHECK(fit.intercept == Exact(-5) / 2);
  CHECK(fit.residual == frac(3, 2));
  const TrendFit sample = fit_trend({{2005, q("0.00000232")}, {2010, q("0.0000045")}, {2016, q("3.3e-8")}});
  CHECK(to_double(sample.slope) < 0);
}

TEST_CASE("rational roundtrip is exact") {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t den = std::uniform_int_distribution<std::int64_t>(2, 1'000'000'000)(rng);
    const std::int64_t num = std::uniform_int_distribution<std::int64_t>(1, den - 1)(rng);
    const std::int64_t k = std::uniform_int_distribution<std::int64_t>(2, 10'000'000)(rng);
    const Exact alpha = frac(num, den);
    REQUIRE(imperfectness(efficiency(alpha, k), k) == Exact(1) - alpha);
  }
}

TEST_CASE("floating roundtrip within 1e-12 relative") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> alpha_dist(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> k_dist(2, 10'000'000);
  double worst = 0;
  for (int i = 0; i < 10'000; ++i) {
    double alpha = alpha_dist(rng);
    if (alpha == 0.0) continue;
    const double k = static_cast<double>(k_dist(rng));
    const double beta = 1.0 - alpha;
    const double back = imperfectness(efficiency(alpha, k), k);
    worst = std::max(worst, std::fabs(back - beta) / beta);
  }
  MESSAGE("worst relative roundtrip error " << worst);
  CHECK(worst <= 1e-12);
}

TEST_CASE("efficiency is monotone") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const std::int64_t den = std::uniform_int_distribution<std::int64_t>(3, 100000)(rng);
    const std::int64_t num = std::uniform_int_distribution<std::int64_t>(1, den - 2)(rng);
    const std::int64_t k = std::uniform_int_distribution<std::int64_t>(2, 1'000'000)(rng);
    const Exact alpha = frac(num, den);
    CHECK(efficiency(alpha, k + 1) < efficiency(alpha, k));
    CHECK(efficiency(frac(num + 1, den), k) > efficiency(alpha, k));
  }
}

TEST_CASE("required imperfectness scales as 1/k") {
  for (const char* e : {"0.5", "0.7416", "0.93", "0.999"}) {
    for (std::int64_t k : {2, 17, 1000, 10649600}) {
      CHECK(imperfectness(q(e), 10 * k) * Exact(10 * k - 1) == imperfectness(q(e), k) * Exact(k - 1));
      CHECK(imperfectness(q(e), k) * Exact(k - 1) == Exact(1) / q(e) - 1);
    }
  }
}

TEST_CASE("CSV ingestion") {
  const auto records = load_csv(sample_path());
  REQUIRE(records.size() == 6);
  CHECK(records[0].name == "CM-5");
  CHECK(records[3].cores == 10649600);
  CHECK(records[3].rmax == q("93014.6"));

  const auto blank = parse_csv(std::string(kCsvHeader) + "\n\n1993,1,CM-5,1024,0.0597,0.131\n\n");
  CHECK(blank.size() == 1);

  CHECK(error_of([] { (void)parse_csv("1993,1,CM-5,1024,0.0597,0.131\n"); }) == Errc::HeaderMismatch);
  CHECK(error_of([] { (void)parse_csv(""); }) == Errc::HeaderMismatch);
  CHECK(error_of([] { (void)load_csv("/nonexistent/records.csv"); }) == Errc::Io);
  try {
    (void)parse_csv(std::string(kCsvHeader) + "\n1993,1,CM-5,1024,0.0597,0.131\n2005,1,BG,many,1,2\n");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Parse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK(error_of([] { (void)parse_csv(std::string(kCsvHeader) + "\n1993,1,CM-5,1024,0.0597\n"); }) == Errc::Parse);
  CHECK(error_of([] { (void)parse_csv(std::string(kCsvHeader) + "\n1993,1,CM-5,1024,0.0597,0.131,9\n"); }) ==
        Errc::Parse);
}

TEST_CASE("beta CSV output") {
  const auto records = load_csv(sample_path());
  const std::string plain = beta_csv(records, std::nullopt);
  CHECK(plain.rfind("year,beta,fit_beta\n", 0) == 0);
  CHECK(plain.find("2016,3.27300e-08,\n") != std::string::npos);
  std::vector<std::pair<int, Exact>> points;
  for (const auto& r : records) points.emplace_back(r.year, from_record(r).beta);
  const std::string fitted = beta_csv(records, fit_trend(points));
  std::size_t lines = 0;
  for (char c : fitted) lines += c == '\n';
  CHECK(lines == 7);
}
