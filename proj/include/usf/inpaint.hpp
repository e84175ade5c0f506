#pragma once

#include "usf/image.hpp"

namespace usf::img {

// Vorticity-transport hole filling: intensity is treated as a stream
// function whose Laplacian (the vorticity) is advected along isophotes and
// smoothed by edge-stopping diffusion, then intensity is recovered from the
// vorticity by Gauss-Seidel relaxation with the unmasked ring as Dirichlet
// data. Defaults keep the scheme diffusion-dominated.
struct InpaintParams {
  double dt = 0.1;        // advection/diffusion step
  double k = 2.0;         // conductivity knee of g(d) = 1/(1+(d/k)^2)
  int gs_sweeps = 50;     // Gauss-Seidel sweeps per outer iteration
  int max_outer = 300;    // outer iteration cap
  double tol = 1e-3;      // max per-pixel change (gray levels) to stop
};

struct InpaintResult {
  GrayImage image;
  bool converged = false;
  int outer_iterations = 0;
};

InpaintResult inpaint_ns(const GrayImage& img, const BinaryMask& mask,
                         const InpaintParams& params = {});

}  // namespace usf::img
