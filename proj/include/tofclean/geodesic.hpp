#pragma once

#include <vector>

#include "tofclean/boundary.hpp"
#include "tofclean/image.hpp"

namespace tofclean {

/// 8-connected grid graph gated by an edge map. Axial moves cost
/// `step_cost`, diagonal moves cost step_cost * sqrt(2). Any move touching
/// an edge pixel is blocked, and a diagonal move is additionally blocked
/// when both of its corner pixels are edges (no leaking through the corner
/// of a diagonal edge line). Costs are symmetric.
struct GeoGraph {
    int width = 0;
    int height = 0;
    double step_cost = 1.0;
    std::vector<uint8_t> edge;

    static GeoGraph from_edges(const EdgeMap& map, double step_cost);

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    bool is_edge(int x, int y) const { return edge[index(x, y)] != 0; }

    /// Blocked test for a single 8-neighbor move from (x0,y0) to (x1,y1).
    bool blocked(int x0, int y0, int x1, int y1) const;
};

struct GeoNeighbor {
    int x = 0;
    int y = 0;
    double dist = 0.0;
};

/// Reusable truncated-Dijkstra searcher (per-pixel scratch buffers).
class GeodesicSearch {
public:
    explicit GeodesicSearch(const GeoGraph& graph);

    /// The k reachable pixels with the smallest shortest-path distance from
    /// p, in ascending (distance, row-major index) order; (p, 0) comes
    /// first. Fewer than k reachable pixels yield a shorter list.
    void knn(PixelCoord p, int k, std::vector<GeoNeighbor>& out);

private:
    const GeoGraph& graph_;
    std::vector<double> dist_;
    std::vector<uint8_t> state_;  // 0 untouched, 1 queued, 2 settled
    std::vector<size_t> touched_;
};

std::vector<GeoNeighbor> geodesic_knn(const GeoGraph& graph, PixelCoord p, int k);

/// Eq-style Gaussian weight of a geodesic distance; infinity maps to 0.
double geo_weight(double dist, double sigma);

/// Edge-aware smoothing: each output pixel is the geo-weighted mean of its
/// k geodesic neighbors' values, skipping neighbors that are flagged
/// invalid in `values` (ineligible contributors). A pixel with no eligible
/// contributor passes its own value through. Constant inputs are returned
/// bit-exactly for any edge map.
RangeImage geodesic_filter(const RangeImage& values, const EdgeMap& edges, int k, double sigma,
                           double step_cost);

/// Diagnostic: how many of the k requested neighbors each pixel actually
/// reaches, as a unitless image (isolated pixels read 1).
AmplitudeImage geodesic_neighbor_counts(const EdgeMap& edges, int k, double step_cost);

}  // namespace tofclean
