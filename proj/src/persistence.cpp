#include "filtlearn/persistence.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

namespace filtlearn {

std::vector<DiagramPoint> PersistenceDiagram::finite_points(int degree) const {
    std::vector<DiagramPoint> out;
    for (const auto& p : points)
        if (p.degree == degree && !p.essential()) out.push_back(p);
    return out;
}

std::vector<DiagramPoint> PersistenceDiagram::essential_points(int degree) const {
    std::vector<DiagramPoint> out;
    for (const auto& p : points)
        if (p.degree == degree && p.essential()) out.push_back(p);
    return out;
}

namespace {

// Dense GF(2) column over the (p-1)-cells of one dimension pair.
struct BitColumn {
    std::vector<std::uint64_t> words;

    void reset(std::size_t n_words) { words.assign(n_words, 0); }
    void flip(int row) { words[row >> 6] ^= (1ULL << (row & 63)); }
    void xor_with(const std::vector<std::uint64_t>& other) {
        for (std::size_t w = 0; w < words.size(); ++w) words[w] ^= other[w];
    }
    // Highest set bit at or below `hint_word`; -1 if the column is zero.
    int low(int hint_word) const {
        for (int w = hint_word; w >= 0; --w)
            if (words[w]) return (w << 6) | (63 - std::countl_zero(words[w]));
        return -1;
    }
};

std::uint64_t simplex_key(const Simplex& s) {
    // 13 bits per vertex id is plenty for the supported cloud sizes.
    return (static_cast<std::uint64_t>(s.dim) << 40) |
           (static_cast<std::uint64_t>(s.v[0] + 1) << 27) |
           (static_cast<std::uint64_t>(s.v[1] + 1) << 14) |
           (static_cast<std::uint64_t>(s.v[2] + 1) << 1);
}

void facets_of(const Simplex& s, Simplex out[3]) {
    if (s.dim == 1) {
        out[0] = Simplex::vertex(s.v[0]);
        out[1] = Simplex::vertex(s.v[1]);
    } else {
        out[0] = Simplex::edge(s.v[1], s.v[2]);
        out[1] = Simplex::edge(s.v[0], s.v[2]);
        out[2] = Simplex::edge(s.v[0], s.v[1]);
    }
}

} // namespace

PersistenceDiagram compute_persistence(const Filtration& filt, int max_degree) {
    if (max_degree < 0)
        throw std::invalid_argument("compute_persistence: max_degree must be >= 0");

    const auto& cells = filt.cells();
    const std::size_t m = cells.size();

    int top_dim = 0;
    for (const auto& c : cells) top_dim = std::max(top_dim, c.s.dim);

    // Rank of each cell inside its own dimension (filtration order), and the
    // global index of the k-th cell of each dimension.
    std::vector<std::vector<int>> by_dim(top_dim + 1);
    std::vector<int> rank_in_dim(m);
    std::unordered_map<std::uint64_t, int> rank_of; // simplex -> in-dim rank
    rank_of.reserve(2 * m);
    for (std::size_t i = 0; i < m; ++i) {
        const Simplex& s = cells[i].s;
        rank_in_dim[i] = static_cast<int>(by_dim[s.dim].size());
        by_dim[s.dim].push_back(static_cast<int>(i));
        if (!rank_of.emplace(simplex_key(s), rank_in_dim[i]).second)
            throw std::invalid_argument("compute_persistence: duplicate cell");
    }

    PersistenceDiagram diag;
    // paired[dim][rank] = true once that cell belongs to a recorded pair (or
    // was cleared); used to find essentials and to skip cleared columns.
    std::vector<std::vector<char>> cleared(top_dim + 1);
    std::vector<std::vector<char>> is_positive(top_dim + 1);
    for (int p = 0; p <= top_dim; ++p) {
        cleared[p].assign(by_dim[p].size(), 0);
        is_positive[p].assign(by_dim[p].size(), 0);
    }
    is_positive[0].assign(by_dim[0].size(), 1); // vertices have empty boundary

    for (int p = top_dim; p >= 1; --p) {
        const auto& cols = by_dim[p];
        const auto& rows = by_dim[p - 1];
        const std::size_t n_words = (rows.size() + 63) / 64;

        std::vector<int> pivot_owner(rows.size(), -1); // row rank -> column rank
        std::vector<std::vector<std::uint64_t>> stored(rows.size());

        BitColumn col;
        Simplex f[3];
        for (std::size_t cj = 0; cj < cols.size(); ++cj) {
            if (cleared[p][cj]) continue;
            const FiltrationCell& cell = cells[cols[cj]];
            col.reset(n_words);
            facets_of(cell.s, f);
            int hint = 0;
            for (int k = 0; k <= p; ++k) {
                auto it = rank_of.find(simplex_key(f[k]));
                if (it == rank_of.end())
                    throw std::invalid_argument(
                        "compute_persistence: facet missing from filtration");
                col.flip(it->second);
                hint = std::max(hint, it->second >> 6);
            }
            for (;;) {
                int low = col.low(hint);
                if (low < 0) {
                    is_positive[p][cj] = 1;
                    break;
                }
                hint = low >> 6;
                int owner = pivot_owner[low];
                if (owner < 0) {
                    pivot_owner[low] = static_cast<int>(cj);
                    stored[low] = std::move(col.words);
                    cleared[p - 1][low] = 1;
                    const FiltrationCell& birth = cells[rows[low]];
                    if (p - 1 <= max_degree && birth.value != cell.value)
                        diag.points.push_back({p - 1, birth.value, cell.value,
                                               rows[low], cols[cj]});
                    break;
                }
                col.xor_with(stored[low]);
            }
        }
    }

    // Essential classes: positive cells never used as a pivot row above.
    constexpr double kInf = std::numeric_limits<double>::infinity();
    for (int p = 0; p <= std::min(top_dim, max_degree); ++p)
        for (std::size_t r = 0; r < by_dim[p].size(); ++r)
            if (is_positive[p][r] && !cleared[p][r])
                diag.points.push_back({p, cells[by_dim[p][r]].value, kInf,
                                       by_dim[p][r], -1});

    std::sort(diag.points.begin(), diag.points.end(),
              [](const DiagramPoint& a, const DiagramPoint& b) {
                  if (a.degree != b.degree) return a.degree < b.degree;
                  return a.birth_cell < b.birth_cell;
              });
    return diag;
}

namespace {

double linf(const DiagramPoint& a, const DiagramPoint& b) {
    return std::max(std::abs(a.birth - b.birth), std::abs(a.death - b.death));
}

// Kuhn's augmenting-path matching on the standard bottleneck decision graph:
// left = A points then |B| diagonal slots, right = B points then |A| slots.
class BottleneckDecider {
public:
    BottleneckDecider(const std::vector<DiagramPoint>& a,
                      const std::vector<DiagramPoint>& b)
        : a_(a), b_(b), nl_(a.size() + b.size()), nr_(b.size() + a.size()) {}

    bool feasible(double c) {
        match_right_.assign(nr_, -1);
        std::vector<int> match_left(nl_, -1);
        for (std::size_t u = 0; u < nl_; ++u) {
            seen_.assign(nr_, 0);
            cost_ = c;
            if (!try_augment(u, match_left)) return false;
        }
        return true;
    }

private:
    bool edge_ok(std::size_t u, std::size_t v) const {
        const bool u_real = u < a_.size();
        const bool v_real = v < b_.size();
        if (u_real && v_real) return linf(a_[u], b_[v]) <= cost_;
        if (u_real) return a_[u].persistence() / 2.0 <= cost_;
        if (v_real) return b_[v].persistence() / 2.0 <= cost_;
        return true; // diagonal to diagonal is free
    }

    bool try_augment(std::size_t u, std::vector<int>& match_left) {
        for (std::size_t v = 0; v < nr_; ++v) {
            if (seen_[v] || !edge_ok(u, v)) continue;
            seen_[v] = 1;
            if (match_right_[v] < 0 ||
                try_augment(static_cast<std::size_t>(match_right_[v]), match_left)) {
                match_right_[v] = static_cast<int>(u);
                match_left[u] = static_cast<int>(v);
                return true;
            }
        }
        return false;
    }

    const std::vector<DiagramPoint>& a_;
    const std::vector<DiagramPoint>& b_;
    std::size_t nl_, nr_;
    double cost_ = 0.0;
    std::vector<int> match_right_;
    std::vector<char> seen_;
};

} // namespace

double bottleneck_distance(const PersistenceDiagram& da, const PersistenceDiagram& db,
                           int degree) {
    auto ea = da.essential_points(degree);
    auto eb = db.essential_points(degree);
    if (ea.size() != eb.size())
        throw std::invalid_argument(
            "bottleneck_distance: essential class counts differ");
    auto by_birth = [](const DiagramPoint& x, const DiagramPoint& y) {
        return x.birth < y.birth;
    };
    std::sort(ea.begin(), ea.end(), by_birth);
    std::sort(eb.begin(), eb.end(), by_birth);
    double best = 0.0;
    for (std::size_t i = 0; i < ea.size(); ++i)
        best = std::max(best, std::abs(ea[i].birth - eb[i].birth));

    auto fa = da.finite_points(degree);
    auto fb = db.finite_points(degree);
    if (fa.empty() && fb.empty()) return best;

    std::vector<double> candidates{0.0};
    for (const auto& p : fa) candidates.push_back(p.persistence() / 2.0);
    for (const auto& p : fb) candidates.push_back(p.persistence() / 2.0);
    for (const auto& p : fa)
        for (const auto& q : fb) candidates.push_back(linf(p, q));
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());

    BottleneckDecider decider(fa, fb);
    std::size_t lo = 0, hi = candidates.size() - 1;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (decider.feasible(candidates[mid]))
            hi = mid;
        else
            lo = mid + 1;
    }
    return std::max(best, candidates[lo]);
}

} // namespace filtlearn
