#pragma once

// Quantitative leakage over observation classes: channel capacity, Shannon
// and min entropy, and their remaining-uncertainty counterparts. The uniform
// prior is computed from exact integer class counts so post-patch equality
// with the prior entropy is exact, not approximate.

#include <cmath>

#include "cachet/oracle.hpp"

namespace cachet {

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Prior {
  bool uniform = true;
  uint64_t domain = 0;
  std::vector<double> weights;  // non-uniform only; indexed by packed secret

  static Prior uniform_over(uint64_t domain) { return Prior{true, domain, {}}; }

  static Prior weighted(std::vector<double> w) {
    Prior p;
    p.uniform = false;
    p.domain = w.size();
    double sum = 0;
    for (double x : w) {
      if (x < 0) throw MetricsError("negative prior weight");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      if (sum <= 0) throw MetricsError("prior weights must sum to a positive value");
      for (double& x : w) x /= sum;
    }
    p.weights = std::move(w);
    return p;
  }

  double weight(uint64_t k) const {
    return uniform ? 1.0 / static_cast<double>(domain) : weights[k];
  }
};

inline double channel_capacity(const OracleReport& rep) {
  if (rep.classes.empty()) throw MetricsError("no observation classes");
  return std::log2(static_cast<double>(rep.classes.size()));
}

inline double shannon_prior(const Prior& prior) {
  if (prior.uniform) return std::log2(static_cast<double>(prior.domain));
  double h = 0;
  for (double w : prior.weights)
    if (w > 0) h -= w * std::log2(w);
  return h;
}

inline double min_entropy_prior(const Prior& prior) {
  if (prior.uniform) return -std::log2(1.0 / static_cast<double>(prior.domain));
  double mx = 0;
  for (double w : prior.weights) mx = std::max(mx, w);
  if (mx <= 0) throw MetricsError("degenerate prior");
  return -std::log2(mx);
}

inline void check_partition(const OracleReport& rep, const Prior& prior) {
  uint64_t covered = 0;
  for (auto& [obs, members] : rep.classes) covered += members.size();
  if (covered != prior.domain)
    throw MetricsError("classes do not partition the prior domain");
}

inline double shannon_remaining(const OracleReport& rep, const Prior& prior) {
  check_partition(rep, prior);
  if (prior.uniform) {
    double t = static_cast<double>(prior.domain);
    double h = 0;
    for (auto& [obs, members] : rep.classes) {
      double n = static_cast<double>(members.size());
      h += (n / t) * std::log2(n);
    }
    return h;
  }
  double h = 0;
  for (auto& [obs, members] : rep.classes) {
    double pr = 0;
    for (uint64_t k : members) pr += prior.weight(k);
    if (pr <= 0) continue;
    double cls = 0;
    for (uint64_t k : members) {
      double lo = prior.weight(k) / pr;
      if (lo > 0) cls -= lo * std::log2(lo);
    }
    h += pr * cls;
  }
  return h;
}

inline double min_entropy_remaining(const OracleReport& rep, const Prior& prior) {
  check_partition(rep, prior);
  if (prior.uniform) {
    // sum_o pr(o) * max_K lambda_o(K) = sum_o (n_o/T) * (1/n_o) = classes/T
    return -std::log2(static_cast<double>(rep.classes.size()) /
                      static_cast<double>(prior.domain));
  }
  double s = 0;
  for (auto& [obs, members] : rep.classes) {
    double mx = 0;
    for (uint64_t k : members) mx = std::max(mx, prior.weight(k));
    s += mx;
  }
  return -std::log2(s);
}

struct MetricsBlock {
  size_t classes = 0;
  double capacity_bits = 0;
  double shannon_prior_bits = 0;
  double shannon_remaining_bits = 0;
  double min_prior_bits = 0;
  double min_remaining_bits = 0;
};

inline MetricsBlock compute_metrics(const OracleReport& rep, const Prior& prior) {
  MetricsBlock m;
  m.classes = rep.classes.size();
  m.capacity_bits = channel_capacity(rep);
  m.shannon_prior_bits = shannon_prior(prior);
  m.shannon_remaining_bits = shannon_remaining(rep, prior);
  m.min_prior_bits = min_entropy_prior(prior);
  m.min_remaining_bits = min_entropy_remaining(rep, prior);
  return m;
}

inline std::string metrics_text(const MetricsBlock& m) {
  char buf[64];
  std::ostringstream os;
  os << "classes: " << m.classes << "\n";
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    os << key << ": " << buf << "\n";
  };
  line("capacity_bits", m.capacity_bits);
  line("shannon_prior", m.shannon_prior_bits);
  line("shannon_remaining", m.shannon_remaining_bits);
  line("min_prior", m.min_prior_bits);
  line("min_remaining", m.min_remaining_bits);
  return os.str();
}

// Prior weights from file: one weight per line in packed-secret order.
inline Prior load_prior(const std::string& path, uint64_t domain) {
  std::ifstream in(path);
  if (!in) throw MetricsError("cannot open prior file: " + path);
  std::vector<double> w;
  double x;
  while (in >> x) w.push_back(x);
  if (w.size() != domain)
    throw MetricsError("prior file has " + std::to_string(w.size()) + " weights, expected " +
                       std::to_string(domain));
  return Prior::weighted(std::move(w));
}

}  // namespace cachet
