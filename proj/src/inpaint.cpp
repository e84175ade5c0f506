#include "usf/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

namespace usf::img {

namespace {

struct Grid {
  int h, w;
  int64_t n() const { return static_cast<int64_t>(h) * w; }
};

// 5-point Laplacian with replicated (Neumann) borders: missing neighbors
// contribute nothing.
double lap_at(const std::vector<double>& v, const Grid& g, int r, int c) {
  const double center = v[static_cast<size_t>(r) * g.w + c];
  double acc = 0.0;
  int cnt = 0;
  if (r > 0) { acc += v[static_cast<size_t>(r - 1) * g.w + c]; ++cnt; }
  if (r + 1 < g.h) { acc += v[static_cast<size_t>(r + 1) * g.w + c]; ++cnt; }
  if (c > 0) { acc += v[static_cast<size_t>(r) * g.w + c - 1]; ++cnt; }
  if (c + 1 < g.w) { acc += v[static_cast<size_t>(r) * g.w + c + 1]; ++cnt; }
  return acc - cnt * center;
}

}  // namespace

InpaintResult inpaint_ns(const GrayImage& img, const BinaryMask& mask,
                         const InpaintParams& params) {
  if (img.h != mask.h || img.w != mask.w)
    throw ValidationError("inpaint_ns: image " + std::to_string(img.h) + "x" +
                          std::to_string(img.w) + " and mask " + std::to_string(mask.h) + "x" +
                          std::to_string(mask.w) + " differ");
  if (params.dt <= 0.0 || params.k <= 0.0 || params.gs_sweeps < 1 || params.max_outer < 1 ||
      params.tol <= 0.0)
    throw ValidationError("inpaint_ns: solver parameters must be positive");

  const Grid g{img.h, img.w};
  InpaintResult res;
  res.image = img;

  std::vector<int> masked;  // row-major flat indices
  for (int64_t i = 0; i < g.n(); ++i)
    if (mask.bits[static_cast<size_t>(i)]) masked.push_back(static_cast<int>(i));
  if (masked.empty()) {
    res.converged = true;
    return res;
  }
  if (static_cast<int64_t>(masked.size()) == g.n())
    throw ValidationError("inpaint_ns: every pixel is masked; no boundary data to fill from");

  std::vector<double>& I = res.image.px;

  // Seed each connected region with the mean of its unmasked one-pixel ring.
  {
    std::vector<uint8_t> seen(static_cast<size_t>(g.n()), 0);
    for (int s : masked) {
      if (seen[static_cast<size_t>(s)]) continue;
      std::vector<int> region;
      double ring_sum = 0.0;
      int64_t ring_cnt = 0;
      std::queue<int> q;
      q.push(s);
      seen[static_cast<size_t>(s)] = 1;
      while (!q.empty()) {
        const int p = q.front();
        q.pop();
        region.push_back(p);
        const int r = p / g.w, c = p % g.w;
        const int nb[4] = {r > 0 ? p - g.w : -1, r + 1 < g.h ? p + g.w : -1,
                           c > 0 ? p - 1 : -1, c + 1 < g.w ? p + 1 : -1};
        for (int x : nb) {
          if (x < 0) continue;
          if (mask.bits[static_cast<size_t>(x)]) {
            if (!seen[static_cast<size_t>(x)]) {
              seen[static_cast<size_t>(x)] = 1;
              q.push(x);
            }
          } else {
            ring_sum += I[static_cast<size_t>(x)];
            ++ring_cnt;
          }
        }
      }
      if (ring_cnt == 0)
        throw ValidationError("inpaint_ns: a masked region has no unmasked boundary pixel");
      const double fill = ring_sum / static_cast<double>(ring_cnt);
      for (int p : region) I[static_cast<size_t>(p)] = fill;
    }
  }

  // Harmonic warm start: relax Laplace(I)=0 inside the mask so the main loop
  // begins from the smooth membrane fill.
  for (int sweep = 0; sweep < 2000; ++sweep) {
    double change = 0.0;
    for (int p : masked) {
      const int r = p / g.w, c = p % g.w;
      double acc = 0.0;
      int cnt = 0;
      if (r > 0) { acc += I[static_cast<size_t>(p - g.w)]; ++cnt; }
      if (r + 1 < g.h) { acc += I[static_cast<size_t>(p + g.w)]; ++cnt; }
      if (c > 0) { acc += I[static_cast<size_t>(p - 1)]; ++cnt; }
      if (c + 1 < g.w) { acc += I[static_cast<size_t>(p + 1)]; ++cnt; }
      const double next = acc / cnt;
      change = std::max(change, std::abs(next - I[static_cast<size_t>(p)]));
      I[static_cast<size_t>(p)] = next;
    }
    if (change < 1e-8) break;
  }

  // The transported vorticity field lives on the masked domain: transport and
  // diffusion stencils clip at the hole boundary (no-flux there), which keeps
  // the recovery anchored on the membrane fill and ring-bounded. Coupling the
  // raw outside Laplacian in instead floods the recovery step with the full
  // speckle curvature and loses the maximum principle.
  std::vector<double> w(static_cast<size_t>(g.n()), 0.0);
  std::vector<double> w2(static_cast<size_t>(g.n()), 0.0);
  std::vector<double> prev(masked.size());
  const double dt = params.dt, kk = params.k;
  const auto in_hole = [&](int p) { return mask.bits[static_cast<size_t>(p)] != 0; };

  for (int outer = 1; outer <= params.max_outer; ++outer) {
    res.outer_iterations = outer;
    for (size_t i = 0; i < masked.size(); ++i)
      prev[i] = I[static_cast<size_t>(masked[i])];

    // (a) vorticity of the current estimate
    for (int p : masked) w[static_cast<size_t>(p)] = lap_at(I, g, p / g.w, p % g.w);

    // (b) upwind transport along the unit isophote direction
    for (int p : masked) {
      const int r = p / g.w, c = p % g.w;
      const double ixp = I[static_cast<size_t>(c + 1 < g.w ? p + 1 : p)];
      const double ixm = I[static_cast<size_t>(c > 0 ? p - 1 : p)];
      const double iyp = I[static_cast<size_t>(r + 1 < g.h ? p + g.w : p)];
      const double iym = I[static_cast<size_t>(r > 0 ? p - g.w : p)];
      const double dix = 0.5 * (ixp - ixm);
      const double diy = 0.5 * (iyp - iym);
      const double norm = std::hypot(dix, diy);
      const double wc = w[static_cast<size_t>(p)];
      if (norm < 1e-12) {
        w2[static_cast<size_t>(p)] = wc;
        continue;
      }
      const double vx = -diy / norm;
      const double vy = dix / norm;
      const double wxm = (c > 0 && in_hole(p - 1)) ? w[static_cast<size_t>(p - 1)] : wc;
      const double wxp = (c + 1 < g.w && in_hole(p + 1)) ? w[static_cast<size_t>(p + 1)] : wc;
      const double wym = (r > 0 && in_hole(p - g.w)) ? w[static_cast<size_t>(p - g.w)] : wc;
      const double wyp = (r + 1 < g.h && in_hole(p + g.w)) ? w[static_cast<size_t>(p + g.w)] : wc;
      const double dwdx = vx > 0.0 ? wc - wxm : wxp - wc;
      const double dwdy = vy > 0.0 ? wc - wym : wyp - wc;
      w2[static_cast<size_t>(p)] = wc - dt * (vx * dwdx + vy * dwdy);
    }

    // (c) edge-stopping diffusion of the transported vorticity
    for (int p : masked) {
      const int r = p / g.w, c = p % g.w;
      const double wc = w2[static_cast<size_t>(p)];
      double flux = 0.0;
      const int nb[4] = {r > 0 ? p - g.w : -1, r + 1 < g.h ? p + g.w : -1,
                         c > 0 ? p - 1 : -1, c + 1 < g.w ? p + 1 : -1};
      for (int x : nb) {
        if (x < 0 || !in_hole(x)) continue;
        const double d = w2[static_cast<size_t>(x)] - wc;
        flux += d / (1.0 + (d / kk) * (d / kk));
      }
      w[static_cast<size_t>(p)] = wc + dt * flux;  // reuse w as the smoothed field
    }

    // (d) recover intensity: Gauss-Seidel on Laplace(I) = w with the
    // unmasked ring as fixed boundary data
    for (int sweep = 0; sweep < params.gs_sweeps; ++sweep) {
      for (int p : masked) {
        const int r = p / g.w, c = p % g.w;
        double acc = 0.0;
        int cnt = 0;
        if (r > 0) { acc += I[static_cast<size_t>(p - g.w)]; ++cnt; }
        if (r + 1 < g.h) { acc += I[static_cast<size_t>(p + g.w)]; ++cnt; }
        if (c > 0) { acc += I[static_cast<size_t>(p - 1)]; ++cnt; }
        if (c + 1 < g.w) { acc += I[static_cast<size_t>(p + 1)]; ++cnt; }
        I[static_cast<size_t>(p)] = (acc - w[static_cast<size_t>(p)]) / cnt;
      }
    }

    double change = 0.0;
    for (size_t i = 0; i < masked.size(); ++i)
      change = std::max(change, std::abs(I[static_cast<size_t>(masked[i])] - prev[i]));
    if (change < params.tol) {
      res.converged = true;
      break;
    }
  }
  for (double v : I)
    if (!std::isfinite(v)) throw RuntimeFailure("inpaint_ns: solver produced non-finite values");
  return res;
}

}  // namespace usf::img
