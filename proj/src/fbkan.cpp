#include "ckan/fbkan.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ckan/error.hpp"
#include "ckan/seed.hpp"

namespace ckan {

bool Subdomain::contains_open(std::span<const double> x) const {
  for (std::size_t d = 0; d < center.size(); ++d) {
    if (!(std::abs(x[d] - center[d]) < half_width[d])) return false;
  }
  return true;
}

Decomposition uniform_decomposition(const Box& domain, const std::vector<int>& per_dim_counts,
                                    double overlap_fraction) {
  require(per_dim_counts.size() == domain.dims(), ErrorCode::InvalidArgument,
          "uniform_decomposition: one count per dimension required");
  require(overlap_fraction > 0.0 && overlap_fraction < 1.0, ErrorCode::InvalidArgument,
          "uniform_decomposition: overlap_fraction must lie in (0, 1)");
  for (int c : per_dim_counts) {
    require(c >= 1, ErrorCode::InvalidArgument, "uniform_decomposition: counts must be >= 1");
  }
  const std::size_t dims = domain.dims();
  std::vector<std::vector<double>> centers(dims);
  std::vector<double> half(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const int n = per_dim_counts[d];
    const double cell = domain.span(d) / n;
    half[d] = (1.0 + overlap_fraction) * cell / 2.0;
    for (int i = 0; i < n; ++i) centers[d].push_back(domain.lo[d] + (i + 0.5) * cell);
  }

  Decomposition decomp;
  decomp.domain = domain;
  decomp.counts = per_dim_counts;
  decomp.overlap_fraction = overlap_fraction;
  std::size_t total = 1;
  for (int c : per_dim_counts) total *= static_cast<std::size_t>(c);
  for (std::size_t j = 0; j < total; ++j) {
    Subdomain sub;
    sub.center.resize(dims);
    sub.half_width = half;
    std::size_t rem = j;
    for (std::size_t d = dims; d-- > 0;) {
      const std::size_t n = static_cast<std::size_t>(per_dim_counts[d]);
      sub.center[d] = centers[d][rem % n];
      rem /= n;
    }
    decomp.subdomains.push_back(std::move(sub));
  }
  return decomp;
}

namespace {

struct Factor {
  double v;
  double d1;
  double d2;
};

Factor window_factor(double x, double mu, double sigma) {
  const double r = x - mu;
  if (!(std::abs(r) < sigma)) return {0.0, 0.0, 0.0};
  const double a = std::numbers::pi / sigma;
  const double theta = a * r;
  const double c = 1.0 + std::cos(theta);
  const double s = std::sin(theta);
  return {c * c, -2.0 * a * c * s, 2.0 * a * a * (s * s - c * std::cos(theta))};
}

// Raw window value plus derivatives along the given dimensions.
void raw_window(const Subdomain& sub, std::span<const double> x, std::span<const int> dims,
                double& value, double* d1, double* d2) {
  const std::size_t n = sub.center.size();
  Factor f[8];
  std::vector<Factor> big;
  Factor* fs = f;
  if (n > 8) {
    big.resize(n);
    fs = big.data();
  }
  value = 1.0;
  for (std::size_t d = 0; d < n; ++d) {
    fs[d] = window_factor(x[d], sub.center[d], sub.half_width[d]);
    value *= fs[d].v;
  }
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const int dim = dims[k];
    double rest = 1.0;
    for (std::size_t d = 0; d < n; ++d) {
      if (static_cast<int>(d) != dim) rest *= fs[d].v;
    }
    d1[k] = fs[dim].d1 * rest;
    d2[k] = fs[dim].d2 * rest;
  }
}

void check_point(const Decomposition& decomp, std::span<const double> x) {
  require(x.size() == decomp.domain.dims(), ErrorCode::WidthMismatch,
          "partition of unity: input dimension mismatch");
  for (double v : x) require(std::isfinite(v), ErrorCode::NonFinite, "partition of unity: non-finite input");
}

}  // namespace

Jet2 window_jet(const Subdomain& sub, std::span<const double> x) {
  require(x.size() == sub.center.size(), ErrorCode::WidthMismatch, "window_jet: dimension mismatch");
  const std::size_t n = x.size();
  std::vector<int> dims(n);
  for (std::size_t d = 0; d < n; ++d) dims[d] = static_cast<int>(d);
  Jet2 out(n);
  raw_window(sub, x, dims, out.value, out.d1.data(), out.d2.data());
  return out;
}

std::vector<double> pou_weights(const Decomposition& decomp, std::span<const double> x) {
  check_point(decomp, x);
  const std::size_t L = decomp.size();
  if (L == 1) return {1.0};
  std::vector<double> w(L);
  double sum = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    raw_window(decomp.subdomains[j], x, {}, w[j], nullptr, nullptr);
    sum += w[j];
  }
  require(sum > 0.0, ErrorCode::Internal, "partition of unity: point not covered by any subdomain");
  for (double& v : w) v /= sum;
  return w;
}

std::vector<Jet2> pou_weight_jets(const Decomposition& decomp, std::span<const double> x,
                                  std::span<const int> active_dims) {
  check_point(decomp, x);
  const std::size_t L = decomp.size();
  const std::size_t nd = active_dims.size();
  std::vector<Jet2> w(L, Jet2(nd));
  if (L == 1) {
    w[0].value = 1.0;
    return w;
  }
  Jet2 sum(nd);
  for (std::size_t j = 0; j < L; ++j) {
    raw_window(decomp.subdomains[j], x, active_dims, w[j].value, w[j].d1.data(), w[j].d2.data());
    sum.value += w[j].value;
    for (std::size_t d = 0; d < nd; ++d) {
      sum.d1[d] += w[j].d1[d];
      sum.d2[d] += w[j].d2[d];
    }
  }
  require(sum.value > 0.0, ErrorCode::Internal, "partition of unity: point not covered by any subdomain");
  const double S = sum.value;
  for (std::size_t j = 0; j < L; ++j) {
    Jet2& wj = w[j];
    const double raw = wj.value;
    for (std::size_t d = 0; d < nd; ++d) {
      const double r1 = wj.d1[d];
      const double r2 = wj.d2[d];
      const double s1 = sum.d1[d];
      const double s2 = sum.d2[d];
      wj.d1[d] = r1 / S - raw * s1 / (S * S);
      wj.d2[d] = r2 / S - 2.0 * r1 * s1 / (S * S) - raw * s2 / (S * S) + 2.0 * raw * s1 * s1 / (S * S * S);
    }
    wj.value = raw / S;
  }
  return w;
}

FbkanModel init_fbkan(const Decomposition& decomp, const std::vector<int>& widths, int intervals,
                      int degree, std::uint64_t seed) {
  require(!widths.empty() && static_cast<std::size_t>(widths.front()) == decomp.domain.dims(),
          ErrorCode::WidthMismatch, "init_fbkan: member input width must equal the domain dimension");
  FbkanModel model;
  model.decomposition = decomp;
  for (std::size_t j = 0; j < decomp.size(); ++j) {
    model.kans.push_back(init_network(widths, intervals, degree, derive_seed(seed, j)));
  }
  return model;
}

std::vector<double> to_member_coords(const Subdomain& sub, std::span<const double> x) {
  std::vector<double> u(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) u[d] = (x[d] - sub.center[d]) / sub.half_width[d];
  return u;
}

std::vector<double> fbkan_forward(const FbkanModel& model, std::span<const double> x) {
  check_point(model.decomposition, x);
  const std::size_t out_width = static_cast<std::size_t>(model.kans.front().output_width());
  std::vector<double> out(out_width, 0.0);
  const auto w = pou_weights(model.decomposition, x);
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (w[j] == 0.0) continue;
    const auto y = network_forward(model.kans[j], to_member_coords(model.decomposition.subdomains[j], x));
    for (std::size_t q = 0; q < out_width; ++q) out[q] += w[j] * y[q];
  }
  return out;
}

std::vector<Jet2> fbkan_forward_jet(const FbkanModel& model, std::span<const double> x,
                                    std::span<const int> active_dims) {
  check_point(model.decomposition, x);
  for (int d : active_dims) {
    require(d >= 0 && static_cast<std::size_t>(d) < x.size(), ErrorCode::WidthMismatch,
            "fbkan_forward_jet: active dimension out of range");
  }
  const std::size_t nd = active_dims.size();
  const std::size_t out_width = static_cast<std::size_t>(model.kans.front().output_width());
  std::vector<Jet2> out(out_width, Jet2(nd));
  const auto w = pou_weight_jets(model.decomposition, x, active_dims);
  KanTape tape;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (w[j].value == 0.0) continue;
    const Subdomain& sub = model.decomposition.subdomains[j];
    std::vector<double> scale(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) scale[d] = 1.0 / sub.half_width[d];
    tape.forward_seeded(model.kans[j], to_member_coords(sub, x), active_dims, scale, false);
    for (std::size_t q = 0; q < out_width; ++q) {
      const double k0 = tape.out_value()[q];
      out[q].value += w[j].value * k0;
      for (std::size_t d = 0; d < nd; ++d) {
        const double k1 = tape.out_d1()[q * nd + d];
        const double k2 = tape.out_d2()[q * nd + d];
        out[q].d1[d] += w[j].d1[d] * k0 + w[j].value * k1;
        out[q].d2[d] += w[j].d2[d] * k0 + 2.0 * w[j].d1[d] * k1 + w[j].value * k2;
      }
    }
  }
  return out;
}

std::size_t param_count(const FbkanModel& model) {
  std::size_t n = 0;
  for (const auto& k : model.kans) n += param_count(k);
  return n;
}

std::vector<double> flatten_params(const FbkanModel& model) {
  std::vector<double> out(param_count(model));
  std::size_t off = 0;
  for (const auto& k : model.kans) {
    const std::size_t n = param_count(k);
    flatten_params(k, std::span<double>(out).subspan(off, n));
    off += n;
  }
  return out;
}

void unflatten_params(FbkanModel& model, std::span<const double> params) {
  require(params.size() == param_count(model), ErrorCode::LengthMismatch,
          "unflatten_params(FBKAN): length mismatch");
  std::size_t off = 0;
  for (auto& k : model.kans) {
    const std::size_t n = param_count(k);
    unflatten_params(k, params.subspan(off, n));
    off += n;
  }
}

FbkanSession::FbkanSession(const FbkanModel& model) : model_(model), tapes_(model.kans.size()) {
  require(!model.kans.empty() && model.kans.size() == model.decomposition.size(), ErrorCode::InvalidArgument,
          "FBKAN: member count must equal subdomain count");
  require(model.kans.front().output_width() == 1, ErrorCode::WidthMismatch,
          "FbkanSession: scalar-output members required");
  std::size_t off = 0;
  for (const auto& k : model.kans) {
    offsets_.push_back(off);
    off += param_count(k);
  }
  offsets_.push_back(off);
}

const Jet2& FbkanSession::forward(std::span<const double> x, std::span<const int> active_dims, bool record) {
  const std::size_t nd = active_dims.size();
  weights_ = pou_weight_jets(model_.decomposition, x, active_dims);
  active_.clear();
  out_.reset(nd);
  seed_.resize(x.size());
  std::vector<double> u(x.size());
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    const Jet2& w = weights_[j];
    if (w.value == 0.0) continue;
    active_.push_back(static_cast<int>(j));
    const Subdomain& sub = model_.decomposition.subdomains[j];
    for (std::size_t d = 0; d < x.size(); ++d) {
      u[d] = (x[d] - sub.center[d]) / sub.half_width[d];
      seed_[d] = 1.0 / sub.half_width[d];
    }
    KanTape& tape = tapes_[j];
    tape.forward_seeded(model_.kans[j], u, active_dims, seed_, record);
    const double k0 = tape.out_value()[0];
    out_.value += w.value * k0;
    for (std::size_t d = 0; d < nd; ++d) {
      const double k1 = tape.out_d1()[d];
      const double k2 = tape.out_d2()[d];
      out_.d1[d] += w.d1[d] * k0 + w.value * k1;
      out_.d2[d] += w.d2[d] * k0 + 2.0 * w.d1[d] * k1 + w.value * k2;
    }
  }
  return out_;
}

void FbkanSession::backward(const Jet2& adjoint, std::span<double> grad) {
  const std::size_t nd = adjoint.dims();
  adj_v_.resize(1);
  adj_d1_.resize(nd);
  adj_d2_.resize(nd);
  for (int j : active_) {
    const Jet2& w = weights_[j];
    double kv = adjoint.value * w.value;
    for (std::size_t d = 0; d < nd; ++d) {
      kv += adjoint.d1[d] * w.d1[d] + adjoint.d2[d] * w.d2[d];
      adj_d1_[d] = adjoint.d1[d] * w.value + 2.0 * adjoint.d2[d] * w.d1[d];
      adj_d2_[d] = adjoint.d2[d] * w.value;
    }
    adj_v_[0] = kv;
    tapes_[j].backward(model_.kans[j], adj_v_, adj_d1_, adj_d2_,
                       grad.subspan(offsets_[j], offsets_[j + 1] - offsets_[j]));
  }
}

}  // namespace ckan
