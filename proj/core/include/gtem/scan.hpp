#pragma once

#include "gtem/ops.hpp"
#include "gtem/param.hpp"
#include "gtem/tensor.hpp"

#include <array>
#include <string>
#include <vector>

namespace gtem {

// Flattening orders for a (T,C,H,W) video feature. The scan core always walks
// its input in frame-major raster order, so each order is realized purely as a
// reversible layout transform applied before the block and inverted after:
//   FST  identity                     frame by frame, row-major raster
//   BST  flip over T,H,W              the FST sequence reversed
//   FTS  (H*W, C, T, 1) transpose     frames fastest at a fixed raster position
//   BTS  transpose, then flip
enum class ScanOrder { FST, BST, FTS, BTS };

const char* scan_order_name(ScanOrder k);

Tensor apply_transform(const Tensor& x, ScanOrder order);
Tensor inverse_transform(const Tensor& y, ScanOrder order, const Shape& original);

// (t,h,w) triples in the order the scan visits them; mirrors apply_transform
std::vector<std::array<int64_t, 3>> scan_index_order(ScanOrder order, int64_t t, int64_t h,
                                                     int64_t w);

// Input-dependent linear state-space recurrence:
//   abar_t = exp(delta_t * A)        (zero-order hold)
//   h_t    = abar_t h_{t-1} + delta_t B_t u_t
//   y_t    = C_t . h_t + D u_t
// u,delta (L,C); B,C (L,N); A (C,N) strictly negative; D (C).
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& b, const Tensor& c,
                      const Tensor& a, const Tensor& d);

struct SsmParams {
    int64_t state_dim = 16;
    Tensor a_log;       // (C,N), A = -exp(a_log)
    Tensor dt_w, dt_b;  // (C,C), (C); delta = softplus(u dt_w + dt_b)
    Tensor b_w, b_b;    // (C,N), (N)
    Tensor c_w, c_b;    // (C,N), (N)
    Tensor d;           // (C)

    void init(ParamStore& store, const std::string& prefix, int64_t channels, int64_t state_dim,
              Rng& rng);
    // seq (L,C) -> (L,C)
    Tensor run(const Tensor& seq) const;
};

struct GtmbWeights {
    Tensor in_w, in_b;   // C -> 2C
    Tensor dw_k, dw_b;   // depthwise 3x3
    Tensor ln_g, ln_b;
    Tensor out_w, out_b; // C -> C
    SsmParams ssm;

    void init(ParamStore& store, const std::string& prefix, int64_t channels, int64_t state_dim,
              Rng& rng);
};

// The block body without layout transforms; scans its input as-is (FST).
Tensor gtmb_core(const Tensor& xt, const GtmbWeights& w);
Tensor gtmb(const Tensor& x, ScanOrder order, const GtmbWeights& w);

struct CmmWeights {
    GtmbWeights fst, bst, fts, bts;
    void init(ParamStore& store, const std::string& prefix, int64_t channels, int64_t state_dim,
              Rng& rng);
};

// Four cascaded blocks, one per order: BTS(FTS(BST(FST(x)))).
Tensor cmm(const Tensor& x, const CmmWeights& w);

} // namespace gtem
