#include "empa/amdahl.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "empa/error.hpp"

namespace empa::amdahl {

namespace {

[[noreturn]] void domain(const std::string& what) { throw Error(Errc::Domain, what); }

Exact pow10(int exponent) {
  Exact result = 1;
  const Exact ten = 10;
  for (int i = 0; i < std::abs(exponent); ++i) result *= ten;
  return exponent < 0 ? Exact(1) / result : result;
}

// Integer m when value == 10^m exactly.
std::optional<int> exact_decade(const Exact& value) {
  using boost::multiprecision::cpp_int;
  if (value <= 0) return std::nullopt;
  cpp_int num = boost::multiprecision::numerator(value);
  cpp_int den = boost::multiprecision::denominator(value);
  auto strip = [](cpp_int& n) -> std::optional<int> {
    int count = 0;
    while (n > 1) {
      if (n % 10 != 0) return std::nullopt;
      n /= 10;
      ++count;
    }
    return count;
  };
  if (num != 1 && den != 1) return std::nullopt;
  if (num == 1) {
    auto d = strip(den);
    return d ? std::optional<int>(-*d) : std::nullopt;
  }
  return strip(num);
}

Exact log10_exact_or_close(const Exact& value) {
  if (auto m = exact_decade(value)) return Exact(*m);
  return Exact(std::log10(to_double(value)));
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

std::optional<Exact> parse_decimal(std::string_view text) {
  using boost::multiprecision::cpp_int;
  std::size_t i = 0;
  bool negative = false;
  if (i < text.size() && (text[i] == '+' || text[i] == '-')) negative = text[i++] == '-';
  cpp_int mantissa = 0;
  int scale = 0;
  bool digits = false;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
    mantissa = mantissa * 10 + (text[i++] - '0');
    digits = true;
  }
  if (i < text.size() && text[i] == '.') {
    ++i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      mantissa = mantissa * 10 + (text[i++] - '0');
      --scale;
      digits = true;
    }
  }
  if (!digits) return std::nullopt;
  if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
    ++i;
    bool exp_negative = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) exp_negative = text[i++] == '-';
    int exponent = 0;
    bool exp_digits = false;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      if (exponent > 10000) return std::nullopt;
      exponent = exponent * 10 + (text[i++] - '0');
      exp_digits = true;
    }
    if (!exp_digits) return std::nullopt;
    scale += exp_negative ? -exponent : exponent;
  }
  if (i != text.size()) return std::nullopt;
  Exact value = Exact(mantissa) * pow10(scale);
  return negative ? Exact(-value) : value;
}

double to_double(const Exact& value) { return value.convert_to<double>(); }

Exact efficiency(const Exact& alpha, std::int64_t k) {
  if (alpha < 0 || alpha > 1) domain("alpha must lie in [0, 1]");
  if (k < 1) domain("k must be >= 1");
  return Exact(1) / (Exact(k) * (Exact(1) - alpha) + alpha);
}

double efficiency(double alpha, double k) {
  if (!(alpha >= 0 && alpha <= 1)) domain("alpha must lie in [0, 1]");
  if (!(k >= 1)) domain("k must be >= 1");
  return 1.0 / (k * (1.0 - alpha) + alpha);
}

Exact imperfectness(const Exact& e, std::int64_t k) {
  if (e <= 0 || e > 1) domain("efficiency must lie in (0, 1]");
  if (k < 2) domain("k must be >= 2");
  return (Exact(1) / e - 1) / Exact(k - 1);
}

double imperfectness(double e, double k) {
  if (!(e > 0 && e <= 1)) domain("efficiency must lie in (0, 1]");
  if (!(k >= 2)) domain("k must be >= 2");
  return (1.0 / e - 1.0) / (k - 1.0);
}

AmdahlPoint point(const Exact& alpha, std::int64_t k) {
  AmdahlPoint p;
  p.alpha = alpha;
  p.k = k;
  p.efficiency = efficiency(alpha, k);
  p.speedup = Exact(k) * p.efficiency;
  p.beta = Exact(1) - alpha;
  return p;
}

AmdahlPoint from_record(const MachineRecord& record) {
  if (record.cores < 2) domain("'" + record.name + "': need at least 2 cores");
  if (record.rmax <= 0 || record.rpeak <= 0) domain("'" + record.name + "': rmax and rpeak must be positive");
  if (record.rmax > record.rpeak) domain("'" + record.name + "': rmax exceeds rpeak");
  AmdahlPoint p;
  p.k = record.cores;
  p.efficiency = record.rmax / record.rpeak;
  p.speedup = Exact(p.k) * p.efficiency;
  p.beta = imperfectness(p.efficiency, p.k);
  p.alpha = Exact(1) - p.beta;
  return p;
}

double TrendFit::log10_beta_at(double year) const { return to_double(intercept) + to_double(slope) * year; }

double TrendFit::beta_at(double year) const { return std::pow(10.0, log10_beta_at(year)); }

TrendFit fit_trend(const std::vector<std::pair<int, Exact>>& points) {
  std::set<int> years;
  for (const auto& [year, beta] : points) {
    if (beta <= 0) domain("beta must be positive to take its logarithm");
    years.insert(year);
  }
  if (years.size() < 2) throw Error(Errc::Underdetermined, "trend needs at least two distinct years");
  const Exact n = static_cast<std::int64_t>(points.size());
  std::vector<Exact> ys;
  Exact sx = 0;
  Exact sy = 0;
  for (const auto& [year, beta] : points) {
    ys.push_back(log10_exact_or_close(beta));
    sx += year;
    sy += ys.back();
  }
  const Exact mx = sx / n;
  const Exact my = sy / n;
  Exact sxx = 0;
  Exact sxy = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Exact dx = Exact(points[i].first) - mx;
    sxx += dx * dx;
    sxy += dx * (ys[i] - my);
  }
  TrendFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.residual = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Exact r = ys[i] - (fit.intercept + fit.slope * points[i].first);
    fit.residual += r * r;
  }
  return fit;
}

std::vector<MachineRecord> parse_csv(std::string_view text) {
  std::vector<MachineRecord> records;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  bool header = false;
  auto parse_error = [&](const std::string& what) {
    throw Error(Errc::Parse, "line " + std::to_string(number) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++number;
    const std::string row = trim(line);
    if (row.empty()) continue;
    if (!header) {
      if (row != kCsvHeader) {
        throw Error(Errc::HeaderMismatch, "line " + std::to_string(number) + ": expected '" +
                                              std::string(kCsvHeader) + "'");
      }
      header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(row);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (row.back() == ',') fields.emplace_back();
    if (fields.size() != 6) parse_error("expected 6 fields, got " + std::to_string(fields.size()));
    auto integer = [&](const std::string& f, const char* what) -> std::int64_t {
      auto v = parse_decimal(f);
      if (!v || boost::multiprecision::denominator(*v) != 1 || f.find_first_of(".eE") != std::string::npos) {
        parse_error(std::string("field '") + what + "' is not an integer: '" + f + "'");
      }
      return boost::multiprecision::numerator(*v).convert_to<std::int64_t>();
    };
    auto decimal = [&](const std::string& f, const char* what) -> Exact {
      auto v = parse_decimal(f);
      if (!v) parse_error(std::string("field '") + what + "' is not a number: '" + f + "'");
      return *v;
    };
    MachineRecord r;
    r.year = static_cast<int>(integer(fields[0], "year"));
    r.rank = static_cast<int>(integer(fields[1], "rank"));
    r.name = fields[2];
    r.cores = integer(fields[3], "cores");
    r.rmax = decimal(fields[4], "rmax_tflops");
    r.rpeak = decimal(fields[5], "rpeak_tflops");
    records.push_back(std::move(r));
  }
  if (!header) throw Error(Errc::HeaderMismatch, "empty file; expected '" + std::string(kCsvHeader) + "'");
  return records;
}

std::vector<MachineRecord> load_csv(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(Errc::Io, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_csv(buffer.str());
}

std::string format_sci(const Exact& value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", std::max(digits - 1, 0), to_double(value));
  return buf;
}

std::string beta_csv(const std::vector<MachineRecord>& records, const std::optional<TrendFit>& fit) {
  std::ostringstream os;
  os << "year,beta,fit_beta\n";
  for (const MachineRecord& r : records) {
    os << r.year << ',' << format_sci(from_record(r).beta) << ',';
    if (fit) os << format_sci(Exact(fit->beta_at(r.year)));
    os << '\n';
  }
  return os.str();
}

}  // namespace empa::amdahl
