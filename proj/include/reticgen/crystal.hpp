#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace reticgen::crystal {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;  // rows are the cell vectors a, b, c

struct CellParameters {
  double a = 0, b = 0, c = 0;           // Å
  double alpha = 90, beta = 90, gamma = 90;  // degrees
};

// a along x, b in the xy-plane, c completing a right-handed cell.
Mat3 cell_basis(const CellParameters& cell);

double determinant(const Mat3& m);

struct PeriodicPointSet {
  Mat3 basis{};
  std::vector<Vec3> motif;           // fractional, each component in [0, 1)
  std::vector<std::string> species;  // carried along, not used by AMD

  // Checks |det| > 1e-6 Å³ and a non-empty motif; reduces coordinates mod 1.
  void normalize();
  Vec3 to_cartesian(const Vec3& fractional) const;
};

// P1 CIF subset: cell lengths/angles and one atom-site loop with fractional
// coordinates. Any non-identity symmetry is rejected. Errors carry
// "<source>:<line>:" prefixes.
PeriodicPointSet parse_cif(std::string_view text, const std::string& source = "<cif>");
PeriodicPointSet load_cif(const std::string& path);

struct NeighborDistances {
  std::vector<std::vector<double>> per_point;  // ascending, k entries each
  int shells = 0;                              // largest lattice shell visited
};

// Distances from every motif point to its k nearest neighbours in the
// infinite periodic set, self excluded. Lattice images are visited in
// Chebyshev shells; after shell r every unvisited image is farther than
// r * (smallest interplanar spacing), so the search stops once the k-th
// distance falls below that. extra_shells widens the search past the stopping
// shell (used to check the bound).
NeighborDistances kth_nearest_distances(const PeriodicPointSet& set, std::size_t k, int extra_shells = 0);

// values[j] = mean over motif points of the (j+1)-th neighbour distance.
std::vector<double> amd(const PeriodicPointSet& set, std::size_t k = 100);

std::vector<std::vector<double>> descriptor_distance_matrix(const std::vector<std::vector<double>>& descriptors);

// Per candidate, the Euclidean distance to the nearest reference.
std::vector<double> novelty_scores(const std::vector<std::vector<double>>& candidates,
                                   const std::vector<std::vector<double>>& references);

double euclidean(const std::vector<double>& a, const std::vector<double>& b);

PeriodicPointSet make_supercell(const PeriodicPointSet& set, int na, int nb, int nc);
PeriodicPointSet translate(const PeriodicPointSet& set, const Vec3& fractional_shift);

}  // namespace reticgen::crystal
