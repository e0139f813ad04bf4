#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "gspam/errors.hpp"
#include "gspam/rng.hpp"

namespace gspam {

/// A (d,2)-hash family: 2-colorings of [d] such that every pair of variables
/// is split by some member. Construction certifies the separation property
/// exhaustively rather than relying on the probabilistic guarantee.
struct HashFamily {
    int d = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::uint8_t>> members;  // values in {1, 2}

    int size() const { return static_cast<int>(members.size()); }

    /// Indicator vectors (e1, e2) of member `index`: (e_i)_q = 1 iff h(q) = i.
    std::pair<std::vector<double>, std::vector<double>> indicator_vectors(int index) const {
        if (index < 0 || index >= size()) throw ConfigError("hash member index out of range");
        std::vector<double> e1(d, 0.0), e2(d, 0.0);
        for (int q = 0; q < d; ++q) (members[index][q] == 1 ? e1[q] : e2[q]) = 1.0;
        return {std::move(e1), std::move(e2)};
    }

    /// Exhaustive pairwise-separation check over all d(d-1)/2 pairs.
    bool separates_all_pairs() const {
        // Per-variable color signature across members; a pair is separated
        // exactly when the signatures differ in some bit.
        const int words = (size() + 63) / 64;
        std::vector<std::uint64_t> sig(static_cast<std::size_t>(d) * words, 0);
        for (int j = 0; j < size(); ++j)
            for (int q = 0; q < d; ++q)
                if (members[j][q] == 1) sig[static_cast<std::size_t>(q) * words + j / 64] |= 1ULL << (j % 64);
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) {
                bool differ = false;
                for (int w = 0; w < words && !differ; ++w)
                    differ = sig[static_cast<std::size_t>(i) * words + w] != sig[static_cast<std::size_t>(j) * words + w];
                if (!differ) return false;
            }
        return true;
    }
};

/// Family size ceil(c' * ln d), natural log; c' = 1.7 lands in [8, 12] for d in [100, 1000].
inline int default_family_size(int d, double c_prime = 1.7) {
    return static_cast<int>(std::ceil(c_prime * std::log(static_cast<double>(d))));
}

/// Builds a certified family of `target_size` colorings. The first attempts
/// draw i.i.d. uniform colorings; once target_size drops below ~2 log2(d)
/// those cannot separate every pair, so later attempts seed the family with a
/// randomly permuted binary code of the variable indices (ceil(log2 d)
/// members, separating by construction) and fill the rest randomly. Every
/// returned family carries the exhaustive separation certificate.
inline HashFamily build_hash_family(int d, int target_size, std::uint64_t seed) {
    if (d < 2) throw ConfigError("hash family needs d >= 2");
    if (target_size < 1) throw ConfigError("hash family needs target_size >= 1");
    int code_bits = 0;
    while ((1LL << code_bits) < d) ++code_bits;
    code_bits = std::max(code_bits, 1);

    for (int attempt = 0; attempt < 32; ++attempt) {
        HashFamily family;
        family.d = d;
        family.seed = seed;
        auto eng = rng::engine(rng::child_seed(seed, static_cast<std::uint64_t>(attempt)));
        family.members.assign(target_size, std::vector<std::uint8_t>(d, 1));
        const bool coded = attempt >= 16 && target_size >= code_bits;
        int fill_from = 0;
        if (coded) {
            std::vector<int> perm(d);
            for (int q = 0; q < d; ++q) perm[q] = q;
            std::shuffle(perm.begin(), perm.end(), eng);
            for (int j = 0; j < code_bits; ++j)
                for (int q = 0; q < d; ++q)
                    family.members[j][q] = ((perm[q] >> j) & 1) ? 1 : 2;
            fill_from = code_bits;
        }
        for (int j = fill_from; j < target_size; ++j)
            for (int q = 0; q < d; ++q) family.members[j][q] = (eng() & 1) ? 1 : 2;
        if (family.separates_all_pairs()) return family;
    }
    throw ConstructionError("hash family separation not achieved after 32 attempts for d=" +
                            std::to_string(d) + ", size=" + std::to_string(target_size) +
                            "; raise target_size");
}

/// A list of query points in [-1,1]^d.
struct SampleGrid {
    int d = 0;
    std::optional<int> origin_member;  // hash member the grid was built from
    std::vector<std::vector<double>> points;

    std::size_t size() const { return points.size(); }

    /// Debug CSV: one point per row as sparse `coordinate:value` pairs (1-based).
    void write_csv(std::ostream& os) const {
        for (const auto& x : points) {
            bool first = true;
            for (int q = 0; q < d; ++q) {
                if (x[q] == 0.0) continue;
                if (!first) os << ',';
                os << (q + 1) << ':' << x[q];
                first = false;
            }
            os << '\n';
        }
    }
};

/// The (2*m_x+1)^2 points c1*e1(h) + c2*e2(h), c in {-1, ..., (m_x-1)/m_x, 1}.
inline SampleGrid hessian_grid(const HashFamily& family, int member, int m_x) {
    if (m_x < 1) throw ConfigError("hessian grid needs m_x >= 1");
    auto [e1, e2] = family.indicator_vectors(member);
    SampleGrid grid;
    grid.d = family.d;
    grid.origin_member = member;
    grid.points.reserve(static_cast<std::size_t>(2 * m_x + 1) * (2 * m_x + 1));
    for (int i = -m_x; i <= m_x; ++i)
        for (int j = -m_x; j <= m_x; ++j) {
            double c1 = static_cast<double>(i) / m_x, c2 = static_cast<double>(j) / m_x;
            std::vector<double> x(family.d);
            for (int q = 0; q < family.d; ++q) x[q] = c1 * e1[q] + c2 * e2[q];
            grid.points.push_back(std::move(x));
        }
    return grid;
}

/// 2*m+1 equispaced points along the main diagonal of [-1,1]^d.
inline SampleGrid diagonal_grid(int m, int d) {
    if (m < 1) throw ConfigError("diagonal grid needs m >= 1");
    SampleGrid grid;
    grid.d = d;
    grid.points.reserve(2 * m + 1);
    for (int i = -m; i <= m; ++i)
        grid.points.emplace_back(d, static_cast<double>(i) / m);
    return grid;
}

/// Union of the per-member Hessian grids with duplicates removed (the shared
/// diagonal points, coinciding partitions). Order is deterministic: members in
/// sequence, first occurrence wins.
inline SampleGrid combined_pair_grid(const HashFamily& family, int m_x) {
    SampleGrid all;
    all.d = family.d;
    std::unordered_set<std::string> seen;
    for (int h = 0; h < family.size(); ++h) {
        SampleGrid g = hessian_grid(family, h, m_x);
        for (auto& x : g.points) {
            std::string key(reinterpret_cast<const char*>(x.data()), x.size() * sizeof(double));
            if (seen.insert(std::move(key)).second) all.points.push_back(std::move(x));
        }
    }
    return all;
}

}  // namespace gspam
