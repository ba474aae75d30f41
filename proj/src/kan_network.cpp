#include "ckan/kan_network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ckan/error.hpp"

namespace ckan {

std::array<double, 4> silu_derivs(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  const double s1 = s * (1.0 - s);
  const double s2 = s1 * (1.0 - 2.0 * s);
  const double s3 = s1 * (1.0 - 2.0 * s) * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
  return {x * s, s + x * s1, 2.0 * s1 + x * s2, 3.0 * s2 + x * s3};
}

SiluJet silu_jet(double x) {
  const auto d = silu_derivs(x);
  return {d[0], d[1], d[2]};
}

double edge_eval(const EdgeFunction& edge, const KnotGrid& grid, double x) {
  require(static_cast<int>(edge.coeffs.size()) == grid.basis_count(), ErrorCode::LengthMismatch,
          "edge_eval: coefficient count does not match the grid");
  LocalBasis local;
  eval_local_basis(grid, x, 0, local);
  double s = 0.0;
  for (int j = 0; j < local.count; ++j) s += edge.coeffs[local.first + j] * local.values[0][j];
  return edge.w_b * silu_derivs(x)[0] + edge.w_s * s;
}

KanLayer::KanLayer(int in, int out, KnotGrid g) : in_width(in), out_width(out), grid(std::move(g)) {
  require(in >= 1 && out >= 1, ErrorCode::InvalidArgument, "KAN layer widths must be >= 1");
  edges.resize(static_cast<std::size_t>(in) * out);
  for (auto& e : edges) e.coeffs.assign(grid.basis_count(), 0.0);
}

std::vector<double> layer_forward(const KanLayer& layer, std::span<const double> x, bool silu_branch) {
  require(static_cast<int>(x.size()) == layer.in_width, ErrorCode::WidthMismatch,
          "layer_forward: input length " + std::to_string(x.size()) + " != in_width " +
              std::to_string(layer.in_width));
  KanNetwork net;
  net.widths = {layer.in_width, layer.out_width};
  net.layers.push_back(layer);
  net.silu_branch = silu_branch;
  return network_forward(net, x);
}

namespace {

void check_input(const KanNetwork& net, std::span<const double> x) {
  require(!net.layers.empty(), ErrorCode::InvalidArgument, "KAN network has no layers");
  require(static_cast<int>(x.size()) == net.input_width(), ErrorCode::WidthMismatch,
          "network input length " + std::to_string(x.size()) + " != " +
              std::to_string(net.input_width()));
}

}  // namespace

std::vector<double> network_forward(const KanNetwork& net, std::span<const double> x) {
  check_input(net, x);
  KanTape tape;
  tape.forward_seeded(net, x, {}, {}, false);
  auto out = tape.out_value();
  return {out.begin(), out.end()};
}

std::vector<Jet2> network_forward_jet(const KanNetwork& net, std::span<const double> x,
                                      std::span<const int> active_dims) {
  check_input(net, x);
  for (int d : active_dims) {
    require(d >= 0 && d < net.input_width(), ErrorCode::WidthMismatch,
            "network_forward_jet: active dimension out of range");
  }
  std::vector<double> ones(x.size(), 1.0);
  KanTape tape;
  tape.forward_seeded(net, x, active_dims, ones, false);
  const int nd = tape.dims();
  std::vector<Jet2> out(net.output_width(), Jet2(nd));
  for (int q = 0; q < net.output_width(); ++q) {
    out[q].value = tape.out_value()[q];
    for (int d = 0; d < nd; ++d) {
      out[q].d1[d] = tape.out_d1()[q * nd + d];
      out[q].d2[d] = tape.out_d2()[q * nd + d];
    }
  }
  return out;
}

KanNetwork init_network(const std::vector<int>& widths, int intervals, int degree,
                        std::uint64_t seed, double grid_lo, double grid_hi) {
  require(widths.size() >= 2, ErrorCode::InvalidArgument, "init_network: need at least two widths");
  for (int w : widths) require(w >= 1, ErrorCode::InvalidArgument, "init_network: widths must be >= 1");
  KanNetwork net;
  net.widths = widths;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    KanLayer layer(widths[l], widths[l + 1], build_grid(grid_lo, grid_hi, intervals, degree));
    for (auto& e : layer.edges) {
      for (double& c : e.coeffs) c = normal(rng);
      e.w_b = 1.0;
      e.w_s = 1.0;
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::size_t param_count(const KanNetwork& net) {
  std::size_t n = 0;
  for (const auto& layer : net.layers) {
    n += layer.edges.size() * static_cast<std::size_t>(layer.grid.basis_count() + 2);
  }
  return n;
}

void flatten_params(const KanNetwork& net, std::span<double> out) {
  require(out.size() == param_count(net), ErrorCode::LengthMismatch, "flatten_params: bad buffer size");
  std::size_t k = 0;
  for (const auto& layer : net.layers) {
    for (const auto& e : layer.edges) {
      for (double c : e.coeffs) out[k++] = c;
      out[k++] = e.w_b;
      out[k++] = e.w_s;
    }
  }
}

std::vector<double> flatten_params(const KanNetwork& net) {
  std::vector<double> out(param_count(net));
  flatten_params(net, out);
  return out;
}

void unflatten_params(KanNetwork& net, std::span<const double> params) {
  require(params.size() == param_count(net), ErrorCode::LengthMismatch,
          "unflatten_params: expected " + std::to_string(param_count(net)) + " values, got " +
              std::to_string(params.size()));
  std::size_t k = 0;
  for (auto& layer : net.layers) {
    for (auto& e : layer.edges) {
      for (double& c : e.coeffs) c = params[k++];
      e.w_b = params[k++];
      e.w_s = params[k++];
      if (!net.silu_branch) e.w_b = 0.0;
    }
  }
}

void KanTape::forward_seeded(const KanNetwork& net, std::span<const double> x,
                             std::span<const int> active_dims, std::span<const double> seed_scale,
                             bool record_for_backward) {
  const int nd = static_cast<int>(active_dims.size());
  const std::size_t n = x.size();
  values_.resize(net.layers.size() + 1);
  d1_.resize(net.layers.size() + 1);
  d2_.resize(net.layers.size() + 1);
  values_[0].assign(x.begin(), x.end());
  d1_[0].assign(n * nd, 0.0);
  d2_[0].assign(n * nd, 0.0);
  for (int d = 0; d < nd; ++d) {
    const int p = active_dims[d];
    d1_[0][p * nd + d] = seed_scale[p];
  }
  run(net, nd, record_for_backward);
}

void KanTape::forward(const KanNetwork& net, std::span<const double> value, std::span<const double> d1,
                      std::span<const double> d2, int dims, bool record_for_backward) {
  const std::size_t nl = net.layers.size();
  values_.resize(nl + 1);
  d1_.resize(nl + 1);
  d2_.resize(nl + 1);
  values_[0].assign(value.begin(), value.end());
  d1_[0].assign(d1.begin(), d1.end());
  d2_[0].assign(d2.begin(), d2.end());
  run(net, dims, record_for_backward);
}

void KanTape::run(const KanNetwork& net, int dims, bool record_for_backward) {
  const std::size_t nl = net.layers.size();
  dims_ = dims;
  recorded_ = record_for_backward;
  records_.resize(nl);

  // Basis derivative orders: phi'' for the forward jet, one more for the
  // reverse sweep (which needs d(phi^(r))/du).
  const int order = dims > 0 ? (record_for_backward ? 3 : 2) : (record_for_backward ? 1 : 0);
  const int spline_orders = dims > 0 ? 3 : 1;
  const bool silu = net.silu_branch;

  for (std::size_t l = 0; l < nl; ++l) {
    const KanLayer& layer = net.layers[l];
    const int in = layer.in_width;
    const int out = layer.out_width;
    LayerRecord& rec = records_[l];
    rec.basis.resize(in);
    rec.silu.resize(in);
    rec.phi.resize(static_cast<std::size_t>(in) * out);
    rec.spline.resize(static_cast<std::size_t>(in) * out);
    const std::vector<double>& u = values_[l];
    const std::vector<double>& u1 = d1_[l];
    const std::vector<double>& u2 = d2_[l];
    for (int p = 0; p < in; ++p) {
      eval_local_basis(layer.grid, u[p], order, rec.basis[p]);
      rec.silu[p] = silu ? silu_derivs(u[p]) : std::array<double, 4>{0.0, 0.0, 0.0, 0.0};
    }

    std::vector<double>& y = values_[l + 1];
    std::vector<double>& y1 = d1_[l + 1];
    std::vector<double>& y2 = d2_[l + 1];
    y.assign(out, 0.0);
    y1.assign(static_cast<std::size_t>(out) * dims, 0.0);
    y2.assign(static_cast<std::size_t>(out) * dims, 0.0);

    for (int q = 0; q < out; ++q) {
      for (int p = 0; p < in; ++p) {
        const std::size_t e = static_cast<std::size_t>(q) * in + p;
        const EdgeFunction& edge = layer.edges[e];
        const LocalBasis& b = rec.basis[p];
        const auto& sl = rec.silu[p];
        const double* c = edge.coeffs.data() + b.first;
        std::array<double, 4> s{0.0, 0.0, 0.0, 0.0};
        for (int r = 0; r <= order; ++r) {
          double acc = 0.0;
          for (int j = 0; j < b.count; ++j) acc += c[j] * b.values[r][j];
          s[r] = acc;
        }
        const double wb = silu ? edge.w_b : 0.0;
        std::array<double, 4> phi{};
        for (int r = 0; r <= order; ++r) phi[r] = wb * sl[r] + edge.w_s * s[r];
        rec.phi[e] = phi;
        for (int r = 0; r < spline_orders; ++r) rec.spline[e][r] = s[r];

        y[q] += phi[0];
        for (int d = 0; d < dims; ++d) {
          const double ud = u1[p * dims + d];
          y1[q * dims + d] += phi[1] * ud;
          y2[q * dims + d] += phi[2] * ud * ud + phi[1] * u2[p * dims + d];
        }
      }
    }
  }
}

void KanTape::backward(const KanNetwork& net, std::span<const double> adj_value,
                       std::span<const double> adj_d1, std::span<const double> adj_d2,
                       std::span<double> grad) {
  require(recorded_, ErrorCode::Internal, "KanTape::backward without a recorded forward pass");
  const std::size_t nl = net.layers.size();
  const int nd = dims_;
  const bool silu = net.silu_branch;

  offsets_.resize(nl);
  std::size_t off = 0;
  for (std::size_t l = 0; l < nl; ++l) {
    offsets_[l] = off;
    off += net.layers[l].edges.size() * static_cast<std::size_t>(net.layers[l].grid.basis_count() + 2);
  }
  require(grad.size() == off, ErrorCode::LengthMismatch, "KanTape::backward: gradient size mismatch");

  adj_v_.assign(adj_value.begin(), adj_value.end());
  adj_d1_.assign(static_cast<std::size_t>(net.output_width()) * nd, 0.0);
  adj_d2_.assign(static_cast<std::size_t>(net.output_width()) * nd, 0.0);
  if (nd > 0) {
    std::copy(adj_d1.begin(), adj_d1.end(), adj_d1_.begin());
    std::copy(adj_d2.begin(), adj_d2.end(), adj_d2_.begin());
  }

  for (std::size_t li = nl; li-- > 0;) {
    const KanLayer& layer = net.layers[li];
    const LayerRecord& rec = records_[li];
    const int in = layer.in_width;
    const int out = layer.out_width;
    const int nb = layer.grid.basis_count();
    const std::vector<double>& u1 = d1_[li];
    const std::vector<double>& u2 = d2_[li];
    const bool need_input = li > 0;
    if (need_input) {
      next_v_.assign(in, 0.0);
      next_d1_.assign(static_cast<std::size_t>(in) * nd, 0.0);
      next_d2_.assign(static_cast<std::size_t>(in) * nd, 0.0);
    }

    for (int q = 0; q < out; ++q) {
      const double a0 = adj_v_[q];
      for (int p = 0; p < in; ++p) {
        const std::size_t e = static_cast<std::size_t>(q) * in + p;
        const EdgeFunction& edge = layer.edges[e];
        const LocalBasis& b = rec.basis[p];
        const auto& sl = rec.silu[p];
        const auto& phi = rec.phi[e];
        const auto& s = rec.spline[e];

        double g1 = 0.0;
        double g2 = 0.0;
        for (int d = 0; d < nd; ++d) {
          const double a1 = adj_d1_[q * nd + d];
          const double a2 = adj_d2_[q * nd + d];
          const double ud = u1[p * nd + d];
          g1 += a1 * ud + a2 * u2[p * nd + d];
          g2 += a2 * ud * ud;
        }

        double* ge = grad.data() + offsets_[li] + e * static_cast<std::size_t>(nb + 2);
        if (nd > 0) {
          for (int j = 0; j < b.count; ++j) {
            ge[b.first + j] += edge.w_s * (a0 * b.values[0][j] + g1 * b.values[1][j] + g2 * b.values[2][j]);
          }
          if (silu) ge[nb] += a0 * sl[0] + g1 * sl[1] + g2 * sl[2];
          ge[nb + 1] += a0 * s[0] + g1 * s[1] + g2 * s[2];
        } else {
          for (int j = 0; j < b.count; ++j) ge[b.first + j] += edge.w_s * a0 * b.values[0][j];
          if (silu) ge[nb] += a0 * sl[0];
          ge[nb + 1] += a0 * s[0];
        }

        if (need_input) {
          next_v_[p] += a0 * phi[1] + g1 * phi[2] + g2 * phi[3];
          for (int d = 0; d < nd; ++d) {
            const double a1 = adj_d1_[q * nd + d];
            const double a2 = adj_d2_[q * nd + d];
            next_d1_[p * nd + d] += a1 * phi[1] + 2.0 * a2 * phi[2] * u1[p * nd + d];
            next_d2_[p * nd + d] += a2 * phi[1];
          }
        }
      }
    }
    if (need_input) {
      adj_v_.swap(next_v_);
      adj_d1_.swap(next_d1_);
      adj_d2_.swap(next_d2_);
    }
  }
}

std::vector<double> model_forward(const KanModel& model, std::span<const double> x) {
  require(x.size() == model.domain.dims(), ErrorCode::WidthMismatch,
          "model_forward: input dimension mismatch");
  std::vector<double> u(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) u[d] = model.domain.to_unit(d, x[d]);
  return network_forward(model.net, u);
}

std::vector<Jet2> model_forward_jet(const KanModel& model, std::span<const double> x,
                                    std::span<const int> active_dims) {
  require(x.size() == model.domain.dims(), ErrorCode::WidthMismatch,
          "model_forward_jet: input dimension mismatch");
  std::vector<double> u(x.size());
  std::vector<double> scale(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    u[d] = model.domain.to_unit(d, x[d]);
    scale[d] = model.domain.unit_scale(d);
  }
  for (int d : active_dims) {
    require(d >= 0 && static_cast<std::size_t>(d) < x.size(), ErrorCode::WidthMismatch,
            "model_forward_jet: active dimension out of range");
  }
  KanTape tape;
  tape.forward_seeded(model.net, u, active_dims, scale, false);
  const int nd = tape.dims();
  std::vector<Jet2> out(model.net.output_width(), Jet2(nd));
  for (int q = 0; q < model.net.output_width(); ++q) {
    out[q].value = tape.out_value()[q];
    for (int d = 0; d < nd; ++d) {
      out[q].d1[d] = tape.out_d1()[q * nd + d];
      out[q].d2[d] = tape.out_d2()[q * nd + d];
    }
  }
  return out;
}

KanModel init_kan_model(const Box& domain, const std::vector<int>& widths, int intervals, int degree,
                        std::uint64_t seed) {
  require(!widths.empty() && static_cast<std::size_t>(widths.front()) == domain.dims(),
          ErrorCode::WidthMismatch, "init_kan_model: input width must equal the domain dimension");
  return KanModel{domain, init_network(widths, intervals, degree, seed)};
}

std::size_t param_count(const KanModel& model) { return param_count(model.net); }
std::vector<double> flatten_params(const KanModel& model) { return flatten_params(model.net); }
void unflatten_params(KanModel& model, std::span<const double> params) { unflatten_params(model.net, params); }

KanModelSession::KanModelSession(const KanModel& model) : model_(model) {
  require(model.net.output_width() == 1, ErrorCode::WidthMismatch,
          "KanModelSession: scalar-output network required");
  require(static_cast<std::size_t>(model.net.input_width()) == model.domain.dims(), ErrorCode::WidthMismatch,
          "KanModelSession: network input width must equal the domain dimension");
  scale_.resize(model.domain.dims());
  for (std::size_t d = 0; d < scale_.size(); ++d) scale_[d] = model.domain.unit_scale(d);
  u_.resize(scale_.size());
  adj_v_.resize(1);
}

const Jet2& KanModelSession::forward(std::span<const double> x, std::span<const int> active_dims, bool record) {
  for (std::size_t d = 0; d < u_.size(); ++d) u_[d] = model_.domain.to_unit(d, x[d]);
  tape_.forward_seeded(model_.net, u_, active_dims, scale_, record);
  out_.value = tape_.out_value()[0];
  out_.d1.assign(tape_.out_d1().begin(), tape_.out_d1().end());
  out_.d2.assign(tape_.out_d2().begin(), tape_.out_d2().end());
  return out_;
}

void KanModelSession::backward(const Jet2& adjoint, std::span<double> grad) {
  adj_v_[0] = adjoint.value;
  tape_.backward(model_.net, adj_v_, adjoint.d1, adjoint.d2, grad);
}

}  // namespace ckan
