#include "tofclean/geodesic.hpp"

#include <cmath>
#include <numbers>
#include <queue>

namespace tofclean {

GeoGraph GeoGraph::from_edges(const EdgeMap& map, double step_cost) {
    if (map.width <= 0 || map.height <= 0)
        throw Error(ErrorCode::InvalidArgument, "geo graph: empty edge map");
    if (!(step_cost > 0.0))
        throw Error(ErrorCode::InvalidArgument, "geo graph: step cost must be positive");
    GeoGraph g;
    g.width = map.width;
    g.height = map.height;
    g.step_cost = step_cost;
    g.edge = map.edge;
    return g;
}

bool GeoGraph::blocked(int x0, int y0, int x1, int y1) const {
    if (is_edge(x0, y0) || is_edge(x1, y1)) return true;
    int dx = x1 - x0, dy = y1 - y0;
    if (dx != 0 && dy != 0) {
        // Diagonal: blocked when both corner pixels are edges.
        if (is_edge(x0 + dx, y0) && is_edge(x0, y0 + dy)) return true;
    }
    return false;
}

GeodesicSearch::GeodesicSearch(const GeoGraph& graph) : graph_(graph) {
    size_t n = static_cast<size_t>(graph.width) * graph.height;
    dist_.assign(n, 0.0);
    state_.assign(n, 0);
}

void GeodesicSearch::knn(PixelCoord p, int k, std::vector<GeoNeighbor>& out) {
    out.clear();
    if (k <= 0) return;
    if (p.x < 0 || p.x >= graph_.width || p.y < 0 || p.y >= graph_.height)
        throw Error(ErrorCode::InvalidArgument, "geodesic knn: start pixel out of bounds");

    for (size_t i : touched_) state_[i] = 0;
    touched_.clear();

    const double diag_cost = graph_.step_cost * std::numbers::sqrt2;
    using Entry = std::pair<double, size_t>;  // (distance, row-major index)
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

    size_t start = graph_.index(p.x, p.y);
    dist_[start] = 0.0;
    state_[start] = 1;
    touched_.push_back(start);
    heap.emplace(0.0, start);

    static constexpr int kMoves[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                         {1, 0},   {-1, 1}, {0, 1},  {1, 1}};

    while (!heap.empty() && static_cast<int>(out.size()) < k) {
        auto [d, idx] = heap.top();
        heap.pop();
        if (state_[idx] == 2) continue;  // stale duplicate
        state_[idx] = 2;
        int x = static_cast<int>(idx % graph_.width);
        int y = static_cast<int>(idx / graph_.width);
        out.push_back({x, y, d});
        if (static_cast<int>(out.size()) == k) break;

        for (const auto& mv : kMoves) {
            int qx = x + mv[0], qy = y + mv[1];
            if (qx < 0 || qx >= graph_.width || qy < 0 || qy >= graph_.height) continue;
            if (graph_.blocked(x, y, qx, qy)) continue;
            size_t q = graph_.index(qx, qy);
            if (state_[q] == 2) continue;
            double nd = d + (mv[0] != 0 && mv[1] != 0 ? diag_cost : graph_.step_cost);
            if (state_[q] == 0 || nd < dist_[q]) {
                dist_[q] = nd;
                if (state_[q] == 0) {
                    state_[q] = 1;
                    touched_.push_back(q);
                }
                heap.emplace(nd, q);
            }
        }
    }
}

std::vector<GeoNeighbor> geodesic_knn(const GeoGraph& graph, PixelCoord p, int k) {
    GeodesicSearch search(graph);
    std::vector<GeoNeighbor> out;
    search.knn(p, k, out);
    return out;
}

double geo_weight(double dist, double sigma) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "geo_weight: sigma must be positive");
    if (std::isinf(dist)) return 0.0;
    return std::exp(-(dist * dist) / (2.0 * sigma * sigma));
}

RangeImage geodesic_filter(const RangeImage& values, const EdgeMap& edges, int k, double sigma,
                           double step_cost) {
    if (values.width != edges.width || values.height != edges.height)
        throw Error(ErrorCode::DimMismatch, "geodesic_filter: image/edge-map dimensions disagree");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "geodesic_filter: k must be >= 1");

    GeoGraph graph = GeoGraph::from_edges(edges, step_cost);
    GeodesicSearch search(graph);
    std::vector<GeoNeighbor> neighbors;

    RangeImage out = values;
    for (int y = 0; y < values.height; ++y)
        for (int x = 0; x < values.width; ++x) {
            search.knn({x, y}, k, neighbors);
            double center = values.at(x, y);
            // Anchored form of the weighted mean: identical algebraically,
            // and exactly the identity on constant inputs.
            double wsum = 0.0, dsum = 0.0;
            for (const GeoNeighbor& nb : neighbors) {
                if (!values.is_valid(nb.x, nb.y)) continue;
                double w = geo_weight(nb.dist, sigma);
                wsum += w;
                dsum += w * (static_cast<double>(values.at(nb.x, nb.y)) - center);
            }
            size_t i = values.index(x, y);
            out.data[i] = wsum > 0.0 ? static_cast<float>(center + dsum / wsum) : values.data[i];
        }
    return out;
}

AmplitudeImage geodesic_neighbor_counts(const EdgeMap& edges, int k, double step_cost) {
    GeoGraph graph = GeoGraph::from_edges(edges, step_cost);
    GeodesicSearch search(graph);
    std::vector<GeoNeighbor> neighbors;
    AmplitudeImage out = AmplitudeImage::constant(edges.width, edges.height, 0.f);
    for (int y = 0; y < edges.height; ++y)
        for (int x = 0; x < edges.width; ++x) {
            search.knn({x, y}, k, neighbors);
            out.at(x, y) = static_cast<float>(neighbors.size());
        }
    return out;
}

}  // namespace tofclean
