#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace stadm {

/// Named electrode set with head-centered 3D coordinates in meters.
/// Montages read from epoch files may carry labels without geometry;
/// operations that need coordinates reject those.
struct Montage {
    std::string name;
    std::vector<std::string> labels;
    std::vector<std::array<double, 3>> positions;  // empty if geometry unknown

    std::size_t channel_count() const { return labels.size(); }
    bool has_positions() const { return !positions.empty(); }
};

/// The synthetic built-in family: "synthetic-256" is a fibonacci-spiral cap
/// of 256 electrodes; "synthetic-N" for N in {128, 64, 32, 16} and the
/// derived "<base>/fpsN" names are farthest-point subsets.
bool is_builtin_montage(const std::string& name);
Montage builtin_montage(const std::string& name);

/// Built-in name, montage text file path, or a bare label-count placeholder.
Montage load_montage(const std::string& name_or_path);

Montage parse_montage_text(std::istream& in, const std::string& name);
Montage montage_without_geometry(const std::string& name, std::size_t channels);

/// Greedy farthest-point selection on electrode positions: start at the
/// electrode farthest from the centroid, repeatedly add the one maximizing
/// the minimum distance to the selected set. Returned indices are sorted.
std::vector<std::size_t> farthest_point_subset(const Montage& montage, std::size_t count);

Montage montage_subset(const Montage& montage, const std::vector<std::size_t>& indices,
                       const std::string& name);

/// Channel tier for a scaling factor: the 256-channel tier table
/// (2 -> 128, 4 -> 64, 8 -> 32, 16 -> 16) when the input is large enough,
/// otherwise a plain channels/factor reduction for small desk montages.
std::size_t target_channel_count(std::size_t channels, int factor);

}  // namespace stadm
