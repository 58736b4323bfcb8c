#include "stadm/montage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "stadm/errors.hpp"

namespace stadm {

namespace {

constexpr double kScalpRadiusM = 0.09;
constexpr double kCapPolarExtent = 2.2;  // radians from vertex; cap reaches below the ears

Montage fibonacci_cap_256() {
    constexpr std::size_t n = 256;
    constexpr double golden_angle = 2.39996322972865332223;  // pi * (3 - sqrt(5))
    Montage m;
    m.name = "synthetic-256";
    m.labels.reserve(n);
    m.positions.reserve(n);
    const double z_lo = std::cos(kCapPolarExtent);
    for (std::size_t i = 0; i < n; ++i) {
        const double frac = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double z = 1.0 - (1.0 - z_lo) * frac;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * static_cast<double>(i);
        char label[8];
        std::snprintf(label, sizeof label, "E%03zu", i + 1);
        m.labels.emplace_back(label);
        m.positions.push_back({kScalpRadiusM * rho * std::cos(phi),
                               kScalpRadiusM * rho * std::sin(phi), kScalpRadiusM * z});
    }
    return m;
}

bool parse_count_suffix(const std::string& s, const std::string& prefix, std::size_t* out) {
    if (s.size() <= prefix.size() || s.compare(0, prefix.size(), prefix) != 0) return false;
    std::size_t v = 0;
    for (std::size_t i = prefix.size(); i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + static_cast<std::size_t>(s[i] - '0');
    }
    *out = v;
    return v > 0;
}

}  // namespace

bool is_builtin_montage(const std::string& name) {
    std::size_t count = 0;
    if (parse_count_suffix(name, "synthetic-", &count))
        return count == 256 || count == 128 || count == 64 || count == 32 || count == 16;
    const std::size_t slash = name.rfind("/fps");
    if (slash != std::string::npos) {
        std::size_t sub = 0;
        return parse_count_suffix(name.substr(slash), "/fps", &sub) &&
               is_builtin_montage(name.substr(0, slash));
    }
    return false;
}

Montage builtin_montage(const std::string& name) {
    std::size_t count = 0;
    if (parse_count_suffix(name, "synthetic-", &count)) {
        Montage base = fibonacci_cap_256();
        if (count == 256) return base;
        if (count != 128 && count != 64 && count != 32 && count != 16)
            throw ConfigError("unknown built-in montage: " + name);
        return montage_subset(base, farthest_point_subset(base, count), name);
    }
    const std::size_t slash = name.rfind("/fps");
    if (slash != std::string::npos) {
        std::size_t sub = 0;
        if (!parse_count_suffix(name.substr(slash), "/fps", &sub))
            throw ConfigError("unknown built-in montage: " + name);
        Montage base = builtin_montage(name.substr(0, slash));
        return montage_subset(base, farthest_point_subset(base, sub), name);
    }
    throw ConfigError("unknown built-in montage: " + name);
}

Montage parse_montage_text(std::istream& in, const std::string& name) {
    Montage m;
    m.name = name;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string label;
        if (!(ls >> label)) continue;  // blank/comment line
        double x, y, z;
        if (!(ls >> x >> y >> z))
            throw ParseError("montage line " + std::to_string(lineno) +
                             ": expected `LABEL x y z`");
        std::string extra;
        if (ls >> extra)
            throw ParseError("montage line " + std::to_string(lineno) + ": trailing tokens");
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
            throw ParseError("montage line " + std::to_string(lineno) +
                             ": non-finite coordinate");
        if (!seen.insert(label).second)
            throw ParseError("montage line " + std::to_string(lineno) + ": duplicate label `" +
                             label + "`");
        m.labels.push_back(label);
        m.positions.push_back({x, y, z});
    }
    if (m.labels.empty()) throw ParseError("montage file has no channels");
    return m;
}

Montage montage_without_geometry(const std::string& name, std::size_t channels) {
    Montage m;
    m.name = name;
    m.labels.reserve(channels);
    for (std::size_t i = 0; i < channels; ++i) m.labels.push_back("C" + std::to_string(i + 1));
    return m;
}

Montage load_montage(const std::string& name_or_path) {
    if (is_builtin_montage(name_or_path)) return builtin_montage(name_or_path);
    std::ifstream in(name_or_path);
    if (!in) throw DataError("montage not found (neither built-in nor readable file): " +
                             name_or_path);
    return parse_montage_text(in, name_or_path);
}

std::vector<std::size_t> farthest_point_subset(const Montage& montage, std::size_t count) {
    if (!montage.has_positions())
        throw DataError("montage `" + montage.name + "` has no electrode geometry");
    const std::size_t n = montage.channel_count();
    if (count > n) throw RangeError("subset size exceeds channel count");

    auto dist2 = [&](std::size_t a, std::size_t b) {
        double s = 0;
        for (int k = 0; k < 3; ++k) {
            const double d = montage.positions[a][k] - montage.positions[b][k];
            s += d * d;
        }
        return s;
    };

    std::array<double, 3> centroid{0, 0, 0};
    for (const auto& p : montage.positions)
        for (int k = 0; k < 3; ++k) centroid[k] += p[k];
    for (int k = 0; k < 3; ++k) centroid[k] /= static_cast<double>(n);

    std::size_t first = 0;
    double best = -1;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (int k = 0; k < 3; ++k) {
            const double d = montage.positions[i][k] - centroid[k];
            s += d * d;
        }
        if (s > best) {
            best = s;
            first = i;
        }
    }

    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> picked{first};
    min_d2[first] = -1;  // marks selected
    while (picked.size() < count) {
        for (std::size_t i = 0; i < n; ++i)
            if (min_d2[i] >= 0) min_d2[i] = std::min(min_d2[i], dist2(i, picked.back()));
        std::size_t next = n;
        double far = -1;
        for (std::size_t i = 0; i < n; ++i)
            if (min_d2[i] > far) {
                far = min_d2[i];
                next = i;
            }
        picked.push_back(next);
        min_d2[next] = -1;
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

Montage montage_subset(const Montage& montage, const std::vector<std::size_t>& indices,
                       const std::string& name) {
    Montage out;
    out.name = name;
    out.labels.reserve(indices.size());
    if (montage.has_positions()) out.positions.reserve(indices.size());
    for (std::size_t idx : indices) {
        if (idx >= montage.channel_count()) throw RangeError("montage subset index out of range");
        out.labels.push_back(montage.labels[idx]);
        if (montage.has_positions()) out.positions.push_back(montage.positions[idx]);
    }
    return out;
}

std::size_t target_channel_count(std::size_t channels, int factor) {
    std::size_t tier = 0;
    switch (factor) {
        case 2: tier = 128; break;
        case 4: tier = 64; break;
        case 8: tier = 32; break;
        case 16: tier = 16; break;
        default: throw ConfigError("scaling factor must be one of 2, 4, 8, 16");
    }
    if (channels >= tier) return tier;
    const std::size_t ratio = channels / static_cast<std::size_t>(factor);
    if (ratio < 1)
        throw RangeError("cannot reduce " + std::to_string(channels) + " channels by factor " +
                         std::to_string(factor));
    return ratio;
}

}  // namespace stadm
