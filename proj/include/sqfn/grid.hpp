#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace sqfn {

using Index = std::int64_t;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Ball {
    Vector center;
    double radius = 0.0;

    Ball() = default;
    Ball(Vector c, double r);

    // cB: same center, radius scaled by c.
    Ball scaled(double c) const;
};

// Uniform lattice on the closed box [-half_width, half_width]^d.
// Node i has coordinates decoded most-significant-axis-first, so the natural
// index order is the lexicographic order of the coordinate tuples.
class Grid {
public:
    Grid(int dimension, double half_width, int points_per_axis);

    int dimension() const { return dim_; }
    double half_width() const { return half_width_; }
    int points_per_axis() const { return ppa_; }
    double spacing() const { return spacing_; }
    Index node_count() const { return node_count_; }
    double cell_volume() const { return cell_volume_; }  // h^d

    double axis_coord(int i) const { return -half_width_ + spacing_ * i; }
    Vector node(Index idx) const;
    void node_coords(Index idx, double* out) const;
    bool inside_box(const Vector& p) const;

    double dist(Index a, Index b) const;
    double dist(Index a, const Vector& p) const;

    std::vector<Index> nodes_in_ball(const Ball& b) const;

    // All node indices ordered by distance from `center`, with the distances.
    // Shared by the critical-radius scan and the ball-family sweeps.
    struct DistanceProfile {
        std::vector<Index> order;
        std::vector<double> dist;  // ascending
    };
    DistanceProfile distance_profile(const Vector& center) const;

    // Multilinear interpolation of a node field at p; 0 outside the box.
    double interpolate(const Vector& field, const Vector& p) const;

private:
    int dim_;
    double half_width_;
    int ppa_;
    double spacing_;
    Index node_count_;
    double cell_volume_;
};

// Riemann sum of f over the closed ball, weight h^d; 0 when no node qualifies.
// The center must lie inside the box.
double integrate_ball(const Grid& g, const Vector& f, const Ball& b);

// Node-count-weighted mean of f over the ball; the ball must contain a node.
double ball_average(const Grid& g, const Vector& f, const Ball& b);

// (dilate f r)(x) = f(r x), resampled by multilinear interpolation with zero
// extension outside the box. Requires r > 0.
Vector dilate(const Grid& g, const Vector& f, double r);

}  // namespace sqfn
