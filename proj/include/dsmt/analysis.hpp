#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "dsmt/tensor.hpp"

namespace dsmt {

// Geometry statistics of one embedding table: the conicity scalar, the
// distribution of per-row cosines against the mean row (64 uniform bins
// over [-1,1]), and top-2 principal-component coordinates per row.
struct GeometryExport {
    double conicity = 0.0;
    std::array<std::size_t, 64> histogram{};
    std::vector<std::array<double, 2>> projection;
    bool rank_deficient = false;  // covariance rank < 2; missing axes are 0
};

// PCA runs power iteration with deflation: tolerance 1e-9, max 1000
// iterations, component sign fixed so the largest-magnitude loading is
// positive.
GeometryExport geometry_export(const Tensor& table);

// Self-describing tab-separated rows: conicity, hist, proj.
void write_geometry(std::ostream& os, const GeometryExport& g);

// Collapse an attention row to the (forward, backward) pair by dropping the
// self mass; equal split when both direction weights vanish.
std::array<double, 2> two_way_renormalize(double forward, double backward);

}  // namespace dsmt
