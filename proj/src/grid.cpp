#include "sqfn/grid.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sqfn {

Ball::Ball(Vector c, double r) : center(std::move(c)), radius(r) {
    if (!(radius > 0.0)) throw std::invalid_argument("Ball: radius must be > 0");
}

Ball Ball::scaled(double c) const {
    if (!(c > 0.0)) throw std::invalid_argument("Ball::scaled: factor must be > 0");
    return Ball(center, c * radius);
}

Grid::Grid(int dimension, double half_width, int points_per_axis)
    : dim_(dimension), half_width_(half_width), ppa_(points_per_axis) {
    if (dim_ < 1 || dim_ > 4) throw std::invalid_argument("Grid: dimension must be in [1,4]");
    if (!(half_width_ > 0.0)) throw std::invalid_argument("Grid: half_width must be > 0");
    if (ppa_ < 2) throw std::invalid_argument("Grid: points_per_axis must be >= 2");
    spacing_ = 2.0 * half_width_ / (ppa_ - 1);
    node_count_ = 1;
    for (int k = 0; k < dim_; ++k) node_count_ *= ppa_;
    cell_volume_ = std::pow(spacing_, dim_);
}

Vector Grid::node(Index idx) const {
    Vector p(dim_);
    node_coords(idx, p.data());
    return p;
}

void Grid::node_coords(Index idx, double* out) const {
    for (int k = dim_ - 1; k >= 0; --k) {
        out[k] = axis_coord(static_cast<int>(idx % ppa_));
        idx /= ppa_;
    }
}

bool Grid::inside_box(const Vector& p) const {
    if (p.size() != dim_) throw std::invalid_argument("point dimension mismatch");
    for (int k = 0; k < dim_; ++k)
        if (std::abs(p[k]) > half_width_ + 1e-12 * half_width_) return false;
    return true;
}

double Grid::dist(Index a, Index b) const {
    double pa[4], pb[4];
    node_coords(a, pa);
    node_coords(b, pb);
    double s = 0.0;
    for (int k = 0; k < dim_; ++k) s += (pa[k] - pb[k]) * (pa[k] - pb[k]);
    return std::sqrt(s);
}

double Grid::dist(Index a, const Vector& p) const {
    double pa[4];
    node_coords(a, pa);
    double s = 0.0;
    for (int k = 0; k < dim_; ++k) s += (pa[k] - p[k]) * (pa[k] - p[k]);
    return std::sqrt(s);
}

std::vector<Index> Grid::nodes_in_ball(const Ball& b) const {
    if (b.center.size() != dim_) throw std::invalid_argument("ball center dimension mismatch");
    // Closed inequality |y - center| <= r keeps boundary ties deterministic.
    std::vector<Index> out;
    const double r2 = b.radius * b.radius;
    // Restrict the scan to the bounding sub-box of the ball.
    int lo[4], hi[4];
    for (int k = 0; k < dim_; ++k) {
        lo[k] = std::max(0, static_cast<int>(std::ceil((b.center[k] - b.radius + half_width_) / spacing_ - 1e-12)));
        hi[k] = std::min(ppa_ - 1, static_cast<int>(std::floor((b.center[k] + b.radius + half_width_) / spacing_ + 1e-12)));
        if (lo[k] > hi[k]) return out;
    }
    int ix[4] = {0, 0, 0, 0};
    for (int k = 0; k < dim_; ++k) ix[k] = lo[k];
    while (true) {
        double s = 0.0;
        Index idx = 0;
        for (int k = 0; k < dim_; ++k) {
            const double dk = axis_coord(ix[k]) - b.center[k];
            s += dk * dk;
            idx = idx * ppa_ + ix[k];
        }
        if (s <= r2) out.push_back(idx);
        int k = dim_ - 1;
        while (k >= 0) {
            if (++ix[k] <= hi[k]) break;
            ix[k] = lo[k];
            --k;
        }
        if (k < 0) break;
    }
    return out;
}

Grid::DistanceProfile Grid::distance_profile(const Vector& center) const {
    if (center.size() != dim_) throw std::invalid_argument("center dimension mismatch");
    DistanceProfile dp;
    dp.order.resize(node_count_);
    dp.dist.resize(node_count_);
    std::vector<double> raw(node_count_);
    double pa[4];
    for (Index i = 0; i < node_count_; ++i) {
        node_coords(i, pa);
        double s = 0.0;
        for (int k = 0; k < dim_; ++k) s += (pa[k] - center[k]) * (pa[k] - center[k]);
        raw[i] = s;
    }
    std::iota(dp.order.begin(), dp.order.end(), Index{0});
    std::stable_sort(dp.order.begin(), dp.order.end(),
                     [&raw](Index a, Index b) { return raw[a] < raw[b]; });
    for (Index i = 0; i < node_count_; ++i) dp.dist[i] = std::sqrt(raw[dp.order[i]]);
    return dp;
}

double Grid::interpolate(const Vector& field, const Vector& p) const {
    if (field.size() != node_count_) throw std::invalid_argument("field length mismatch");
    if (p.size() != dim_) throw std::invalid_argument("point dimension mismatch");
    int base[4];
    double frac[4];
    for (int k = 0; k < dim_; ++k) {
        const double u = (p[k] + half_width_) / spacing_;
        if (u < 0.0 || u > ppa_ - 1) return 0.0;
        int b = static_cast<int>(std::floor(u));
        if (b >= ppa_ - 1) b = ppa_ - 2;
        base[k] = b;
        frac[k] = u - b;
        // snap to the lattice so node-aligned queries read node values exactly
        if (frac[k] < 1e-9) frac[k] = 0.0;
        if (frac[k] > 1.0 - 1e-9) frac[k] = 1.0;
    }
    double acc = 0.0;
    const int corners = 1 << dim_;
    for (int c = 0; c < corners; ++c) {
        double w = 1.0;
        Index idx = 0;
        for (int k = 0; k < dim_; ++k) {
            const int bit = (c >> k) & 1;
            w *= bit ? frac[k] : (1.0 - frac[k]);
            idx = idx * ppa_ + (base[k] + bit);
        }
        acc += w * field[idx];
    }
    return acc;
}

double integrate_ball(const Grid& g, const Vector& f, const Ball& b) {
    if (f.size() != g.node_count()) throw std::invalid_argument("field length mismatch");
    if (!g.inside_box(b.center)) throw std::domain_error("integrate_ball: center outside the box");
    const auto nodes = g.nodes_in_ball(b);
    double s = 0.0;
    for (Index i : nodes) s += f[i];  // fixed index order for reproducible sums
    return s * g.cell_volume();
}

double ball_average(const Grid& g, const Vector& f, const Ball& b) {
    if (f.size() != g.node_count()) throw std::invalid_argument("field length mismatch");
    if (!g.inside_box(b.center)) throw std::domain_error("ball_average: center outside the box");
    const auto nodes = g.nodes_in_ball(b);
    if (nodes.empty()) throw std::invalid_argument("ball_average: ball contains no node");
    double s = 0.0;
    for (Index i : nodes) s += f[i];
    return s / static_cast<double>(nodes.size());
}

Vector dilate(const Grid& g, const Vector& f, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("dilate: factor must be > 0");
    Vector out(g.node_count());
    Vector p(g.dimension());
    double pa[4];
    for (Index i = 0; i < g.node_count(); ++i) {
        g.node_coords(i, pa);
        for (int k = 0; k < g.dimension(); ++k) p[k] = r * pa[k];
        bool in = true;
        for (int k = 0; k < g.dimension(); ++k)
            if (std::abs(p[k]) > g.half_width()) { in = false; break; }
        out[i] = in ? g.interpolate(f, p) : 0.0;
    }
    return out;
}

}  // namespace sqfn
