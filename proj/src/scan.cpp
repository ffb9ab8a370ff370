#include "s2w/ops.hpp"

#include "op_util.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace s2w
{

namespace
{
using detail::grad_of;
using detail::value_of;

// States are checkpointed every kChunk tokens so the backward pass holds at
// most kChunk + 1 states of size E x S at a time.
constexpr std::size_t kChunk = 64;

struct ScanDims
{
  std::size_t n, e, s;
};

// Advances the recurrence over tokens [begin, end) starting from `h`. When
// `states` is non-null, writes h_t for each token (t - begin) into it.
void run_scan(const ScanDims& dim, const double* u, const double* delta, const double* a,
              const double* b, const double* c, const double* d, std::size_t begin,
              std::size_t end, double* h, double* y, double* states)
{
  for (std::size_t t = begin; t < end; ++t) {
    const double* bt = b + t * dim.s;
    const double* ct = c + t * dim.s;
    for (std::size_t ch = 0; ch < dim.e; ++ch) {
      const double dt = delta[t * dim.e + ch];
      const double ut = u[t * dim.e + ch];
      const double du = dt * ut;
      double* hc = h + ch * dim.s;
      const double* ac = a + ch * dim.s;
      double acc = 0.0;
      for (std::size_t k = 0; k < dim.s; ++k) {
        hc[k] = std::exp(dt * ac[k]) * hc[k] + du * bt[k];
        acc += ct[k] * hc[k];
      }
      if (y)
        y[t * dim.e + ch] = acc + d[ch] * ut;
    }
    if (states)
      std::copy(h, h + dim.e * dim.s, states + (t - begin) * dim.e * dim.s);
  }
}
} // namespace

Tensor selective_scan_core(const Tensor& u, const Tensor& delta, const Tensor& a_log,
                           const Tensor& b, const Tensor& c, const Tensor& d)
{
  if (u.rank() != 2 || delta.shape() != u.shape())
    throw ShapeError("selective_scan: u " + to_string(u.shape()) + " and delta " +
                     to_string(delta.shape()) + " must be equal N x E");
  const ScanDims dim{u.dim(0), u.dim(1), a_log.rank() == 2 ? a_log.dim(1) : 0};
  if (a_log.rank() != 2 || a_log.dim(0) != dim.e)
    throw ShapeError("selective_scan: a_log must be E x S, got " + to_string(a_log.shape()));
  if (b.shape() != Shape{dim.n, dim.s} || c.shape() != Shape{dim.n, dim.s})
    throw ShapeError("selective_scan: B " + to_string(b.shape()) + " / C " +
                     to_string(c.shape()) + " must be N x S with N matching the input");
  if (d.shape() != Shape{dim.e})
    throw ShapeError("selective_scan: D must be a vector of " + std::to_string(dim.e));
  for (double v : delta.data())
    if (!(v > 0.0))
      throw NumericalError("selective_scan: delta must be strictly positive");

  std::vector<double> a(dim.e * dim.s);
  for (std::size_t i = 0; i < a.size(); ++i)
    a[i] = -std::exp(a_log.data()[i]);

  const bool record = grad_enabled() &&
                      (u.requires_grad() || delta.requires_grad() || a_log.requires_grad() ||
                       b.requires_grad() || c.requires_grad() || d.requires_grad());

  std::vector<double> y(dim.n * dim.e);
  std::vector<double> h(dim.e * dim.s, 0.0);
  std::vector<double> checkpoints;
  const std::size_t n_chunks = (dim.n + kChunk - 1) / kChunk;
  const memory::Reservation forward_scratch((h.size() + a.size()) * sizeof(double));
  std::shared_ptr<memory::Reservation> saved;
  if (record) {
    checkpoints.reserve(n_chunks * dim.e * dim.s);
    saved = std::make_shared<memory::Reservation>(n_chunks * dim.e * dim.s * sizeof(double));
  }
  for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
    if (record)
      checkpoints.insert(checkpoints.end(), h.begin(), h.end());
    const std::size_t begin = chunk * kChunk, end = std::min(dim.n, begin + kChunk);
    run_scan(dim, u.data().data(), delta.data().data(), a.data(), b.data().data(),
             c.data().data(), d.data().data(), begin, end, h.data(), y.data(), nullptr);
  }

  return make_op_result(
    Shape{dim.n, dim.e}, std::move(y), {u, delta, a_log, b, c, d},
    [dim, a = std::move(a), checkpoints = std::move(checkpoints), saved](detail::Node& self) {
      const auto& uv = value_of(self, 0);
      const auto& dv = value_of(self, 1);
      const auto& bv = value_of(self, 3);
      const auto& cv = value_of(self, 4);
      const auto& Dv = value_of(self, 5);
      auto* gu = grad_of(self, 0);
      auto* gdelta = grad_of(self, 1);
      auto* galog = grad_of(self, 2);
      auto* gb = grad_of(self, 3);
      auto* gc = grad_of(self, 4);
      auto* gD = grad_of(self, 5);

      const std::size_t es = dim.e * dim.s;
      std::vector<double> adj(es, 0.0);  // dL/dh_t carried backwards
      std::vector<double> ga(es, 0.0);   // dL/dA
      std::vector<double> states((kChunk + 1) * es);
      const memory::Reservation scratch((states.size() + 3 * es) * sizeof(double));
      const double* gy = self.grad.data();
      const std::size_t n_chunks = (dim.n + kChunk - 1) / kChunk;

      for (std::size_t chunk = n_chunks; chunk-- > 0;) {
        const std::size_t begin = chunk * kChunk, end = std::min(dim.n, begin + kChunk);
        // states[0] = h_{begin-1}, states[j+1] = h_{begin+j}
        std::copy(checkpoints.begin() + static_cast<std::ptrdiff_t>(chunk * es),
                  checkpoints.begin() + static_cast<std::ptrdiff_t>((chunk + 1) * es),
                  states.begin());
        std::vector<double> h(states.begin(), states.begin() + static_cast<std::ptrdiff_t>(es));
        run_scan(dim, uv.data(), dv.data(), a.data(), bv.data(), cv.data(), Dv.data(), begin,
                 end, h.data(), nullptr, states.data() + es);

        for (std::size_t t = end; t-- > begin;) {
          const double* h_t = states.data() + (t - begin + 1) * es;
          const double* h_prev = states.data() + (t - begin) * es;
          const double* bt = bv.data() + t * dim.s;
          const double* ct = cv.data() + t * dim.s;
          for (std::size_t ch = 0; ch < dim.e; ++ch) {
            const std::size_t idx = t * dim.e + ch;
            const double g_out = gy[idx];
            const double dt = dv[idx];
            const double ut = uv[idx];
            if (gD)
              (*gD)[ch] += g_out * ut;
            double g_u = g_out * Dv[ch];
            double g_dt = 0.0;
            double* adj_c = adj.data() + ch * dim.s;
            const double* ac = a.data() + ch * dim.s;
            const double* hc = h_t + ch * dim.s;
            const double* hp = h_prev + ch * dim.s;
            for (std::size_t k = 0; k < dim.s; ++k) {
              const double g_h = adj_c[k] + g_out * ct[k];
              if (gc)
                (*gc)[t * dim.s + k] += g_out * hc[k];
              const double decay = std::exp(dt * ac[k]);
              const double g_decay = g_h * hp[k] * decay;
              ga[ch * dim.s + k] += g_decay * dt;
              g_dt += g_decay * ac[k] + g_h * bt[k] * ut;
              if (gb)
                (*gb)[t * dim.s + k] += g_h * dt * ut;
              g_u += g_h * dt * bt[k];
              adj_c[k] = g_h * decay;
            }
            if (gu)
              (*gu)[idx] += g_u;
            if (gdelta)
              (*gdelta)[idx] += g_dt;
          }
        }
      }
      if (galog)
        for (std::size_t i = 0; i < es; ++i)
          (*galog)[i] += ga[i] * a[i];
    },
    "selective_scan");
}

} // namespace s2w
