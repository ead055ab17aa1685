#include "dflearn/algebra.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dflearn/linalg.hpp"

namespace dflearn::algebra {

int AlgebraStructure::dim() const {
    int n = n0;
    for (const auto& [nk, mk] : blocks) n += nk * mk;
    return n;
}

int AlgebraStructure::block_count() const { return static_cast<int>(blocks.size()); }

int AlgebraStructure::linear_dimension() const {
    int d = 0;
    for (const auto& [nk, mk] : blocks) d += nk * nk;
    return d;
}

AlgebraStructure AlgebraStructure::canonical() const {
    AlgebraStructure out = *this;
    std::sort(out.blocks.begin(), out.blocks.end(),
              [](const auto& a, const auto& b) { return a > b; });
    return out;
}

std::string AlgebraStructure::to_string() const {
    std::ostringstream os;
    os << '(';
    if (n0 > 0) os << "n0=" << n0 << "; ";
    for (std::size_t i = 0; i < blocks.size();) {
        std::size_t j = i;
        while (j < blocks.size() && blocks[j] == blocks[i]) ++j;
        if (i > 0) os << ',';
        os << '{' << blocks[i].first << ',' << blocks[i].second << '}';
        if (j - i > 1) os << '^' << (j - i);
        i = j;
    }
    os << ')';
    return os.str();
}

bool AlgebraStructure::operator<(const AlgebraStructure& other) const {
    if (n0 != other.n0) return n0 < other.n0;
    return blocks < other.blocks;
}

void AlgebraStructure::validate() const {
    if (n0 < 0) throw std::invalid_argument("AlgebraStructure: n0 must be nonnegative");
    if (blocks.empty()) throw std::invalid_argument("AlgebraStructure: no blocks");
    for (const auto& [nk, mk] : blocks)
        if (nk < 1 || mk < 1)
            throw std::invalid_argument("AlgebraStructure: block sizes must be positive");
}

void to_json(nlohmann::json& j, const AlgebraStructure& s) {
    j = nlohmann::json{{"n0", s.n0}, {"blocks", s.blocks}};
}

void from_json(const nlohmann::json& j, AlgebraStructure& s) {
    j.at("n0").get_to(s.n0);
    j.at("blocks").get_to(s.blocks);
    s.validate();
}

AlgebraBasis AlgebraBasis::canonical(const AlgebraStructure& s) {
    s.validate();
    return AlgebraBasis{s, Matrix::Identity(s.dim(), s.dim())};
}

void AlgebraBasis::validate() const {
    structure.validate();
    const int n = structure.dim();
    if (unitary.rows() != n || unitary.cols() != n)
        throw std::invalid_argument("AlgebraBasis: unitary has wrong shape");
    if (linalg::unitarity_error(unitary) > 1e-10)
        throw std::invalid_argument("AlgebraBasis: basis change is not unitary");
}

Matrix assemble_element(const AlgebraElement& e) {
    e.basis.validate();
    const AlgebraStructure& s = e.basis.structure;
    if (e.block_matrices.size() != s.blocks.size())
        throw std::invalid_argument("assemble_element: wrong number of block factors");
    const int n = s.dim();
    Matrix d = Matrix::Zero(n, n);
    int offset = s.n0;
    for (std::size_t k = 0; k < s.blocks.size(); ++k) {
        const auto [nk, mk] = s.blocks[k];
        const Matrix& xk = e.block_matrices[k];
        if (xk.rows() != nk || xk.cols() != nk)
            throw std::invalid_argument("assemble_element: block factor has wrong shape");
        d.block(offset, offset, nk * mk, nk * mk) =
            linalg::kron(xk, Matrix::Identity(mk, mk));
        offset += nk * mk;
    }
    return e.basis.unitary * d * e.basis.unitary.adjoint();
}

std::vector<Matrix> block_projectors(const AlgebraBasis& b) {
    b.validate();
    const AlgebraStructure& s = b.structure;
    const int n = s.dim();
    std::vector<Matrix> out;
    out.reserve(s.blocks.size());
    int offset = s.n0;
    for (const auto& [nk, mk] : s.blocks) {
        Matrix p = Matrix::Zero(nk * mk, n);
        p.block(0, offset, nk * mk, nk * mk) = Matrix::Identity(nk * mk, nk * mk);
        out.push_back(p * b.unitary.adjoint());
        offset += nk * mk;
    }
    return out;
}

Matrix zero_block_rows(const AlgebraBasis& b) {
    b.validate();
    const int n = b.structure.dim();
    Matrix p = Matrix::Zero(b.structure.n0, n);
    p.leftCols(b.structure.n0) = Matrix::Identity(b.structure.n0, b.structure.n0);
    return p * b.unitary.adjoint();
}

std::vector<Matrix> spanning_set(const AlgebraBasis& b) {
    b.validate();
    const AlgebraStructure& s = b.structure;
    const int n = s.dim();
    std::vector<Matrix> out;
    int offset = s.n0;
    for (const auto& [nk, mk] : s.blocks) {
        const double norm = 1.0 / std::sqrt(static_cast<double>(mk));
        for (int a = 0; a < nk; ++a)
            for (int c = 0; c < nk; ++c) {
                Matrix d = Matrix::Zero(n, n);
                for (int t = 0; t < mk; ++t)
                    d(offset + a * mk + t, offset + c * mk + t) = norm;
                out.push_back(b.unitary * d * b.unitary.adjoint());
            }
        offset += nk * mk;
    }
    return out;
}

int intersection_dimension(const AlgebraBasis& a, const AlgebraBasis& b, double tol) {
    const auto sa = spanning_set(a);
    const auto sb = spanning_set(b);
    if (a.structure.dim() != b.structure.dim())
        throw std::invalid_argument("intersection_dimension: dimension mismatch");
    const int n2 = a.structure.dim() * a.structure.dim();
    const auto rank_of = [tol](const Matrix& m) {
        Eigen::ColPivHouseholderQR<Matrix> qr(m);
        qr.setThreshold(tol);
        return static_cast<int>(qr.rank());
    };
    Matrix joint(n2, sa.size() + sb.size());
    Matrix left(n2, sa.size());
    Matrix right(n2, sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        left.col(i) = linalg::vec(sa[i]);
        joint.col(i) = left.col(i);
    }
    for (std::size_t i = 0; i < sb.size(); ++i) {
        right.col(i) = linalg::vec(sb[i]);
        joint.col(sa.size() + i) = right.col(i);
    }
    return rank_of(left) + rank_of(right) - rank_of(joint);
}

namespace {

// All ordered lists of (n_k, m_k) pairs whose products sum to r, in a fixed
// deterministic order.
void enumerate_blocks(int r, std::vector<std::pair<int, int>>& prefix,
                      std::vector<AlgebraStructure>& out, int n0) {
    if (r == 0) {
        if (!prefix.empty()) out.push_back(AlgebraStructure{n0, prefix});
        return;
    }
    for (int total = 1; total <= r; ++total)
        for (int d = 1; d <= total; ++d) {
            if (total % d != 0) continue;
            prefix.emplace_back(d, total / d);
            enumerate_blocks(r - total, prefix, out, n0);
            prefix.pop_back();
        }
}

}  // namespace

std::vector<AlgebraStructure> enumerate_structures(int n, bool up_to_permutation,
                                                   bool allow_n0) {
    if (n < 1) throw std::invalid_argument("enumerate_structures: n must be positive");
    std::vector<AlgebraStructure> ordered;
    std::vector<std::pair<int, int>> prefix;
    const int n0_max = allow_n0 ? n - 1 : 0;
    for (int n0 = 0; n0 <= n0_max; ++n0) enumerate_blocks(n - n0, prefix, ordered, n0);
    if (!up_to_permutation) return ordered;
    std::set<AlgebraStructure> canonical;
    for (const auto& s : ordered) canonical.insert(s.canonical());
    return {canonical.begin(), canonical.end()};
}

namespace {

struct EmbedSearch {
    const std::vector<std::pair<int, int>>& super_blocks;
    const std::vector<std::pair<int, int>>& sub_blocks;
    IntMatrix a;
    std::vector<int> row_rem;  // super n_k not yet covered
    std::vector<int> col_rem;  // sub m_l not yet assembled

    bool dfs(int cell) {
        const int kk = static_cast<int>(super_blocks.size());
        const int ll = static_cast<int>(sub_blocks.size());
        if (cell == kk * ll) {
            for (int l = 0; l < ll; ++l)
                if (col_rem[l] != 0) return false;
            return true;
        }
        const int k = cell / ll;
        const int l = cell % ll;
        const int sub_n = sub_blocks[l].first;
        const int super_m = super_blocks[k].second;
        const int bound = std::min(row_rem[k] / sub_n, col_rem[l] / super_m);
        for (int v = 0; v <= bound; ++v) {
            a(k, l) = v;
            row_rem[k] -= v * sub_n;
            col_rem[l] -= v * super_m;
            const bool row_done_ok = (l + 1 < ll) || (row_rem[k] == 0);
            if (row_done_ok && dfs(cell + 1)) return true;
            row_rem[k] += v * sub_n;
            col_rem[l] += v * super_m;
        }
        a(k, l) = 0;
        return false;
    }
};

}  // namespace

std::optional<EmbeddingWitness> is_embedded(const AlgebraStructure& sub,
                                            const AlgebraStructure& super) {
    sub.validate();
    super.validate();
    if (!sub.unital() || !super.unital())
        throw std::invalid_argument("is_embedded: structures must be unital");
    if (sub.dim() != super.dim())
        throw std::invalid_argument("is_embedded: total dimensions differ");
    const int kk = super.block_count();
    const int ll = sub.block_count();
    EmbedSearch search{super.blocks, sub.blocks, IntMatrix::Zero(kk, ll), {}, {}};
    search.row_rem.reserve(kk);
    for (const auto& [nk, mk] : super.blocks) search.row_rem.push_back(nk);
    search.col_rem.reserve(ll);
    for (const auto& [nl, ml] : sub.blocks) search.col_rem.push_back(ml);
    if (!search.dfs(0)) return std::nullopt;
    return EmbeddingWitness{search.a};
}

HierarchyDag hierarchy_dag(const std::vector<AlgebraStructure>& structures) {
    const int count = static_cast<int>(structures.size());
    for (int i = 0; i < count; ++i)
        for (int j = i + 1; j < count; ++j)
            if (structures[i] == structures[j])
                throw std::invalid_argument("hierarchy_dag: duplicate structure");
    std::vector<std::vector<bool>> rel(count, std::vector<bool>(count, false));
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < count; ++j)
            if (i != j) rel[i][j] = is_embedded(structures[i], structures[j]).has_value();
    for (int i = 0; i < count; ++i)
        for (int j = i + 1; j < count; ++j)
            if (rel[i][j] && rel[j][i])
                throw std::invalid_argument("hierarchy_dag: embedding relation has a cycle");
    HierarchyDag dag{structures, {}};
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < count; ++j) {
            if (!rel[i][j]) continue;
            bool redundant = false;
            for (int k = 0; k < count && !redundant; ++k)
                redundant = (k != i && k != j && rel[i][k] && rel[k][j]);
            if (!redundant) dag.edges.emplace_back(i, j);
        }
    std::sort(dag.edges.begin(), dag.edges.end());
    return dag;
}

std::vector<int> HierarchyDag::topological_order() const {
    const int count = static_cast<int>(nodes.size());
    // Arcs run super -> sub so that simpler model classes come first.
    std::vector<std::vector<int>> succ(count);
    std::vector<int> in_deg(count, 0);
    for (const auto& [sub, super] : edges) {
        succ[super].push_back(sub);
        ++in_deg[sub];
    }
    const auto node_less = [this](int a, int b) {
        if (nodes[a] < nodes[b]) return true;
        if (nodes[b] < nodes[a]) return false;
        return a < b;
    };
    std::vector<int> ready;
    for (int i = 0; i < count; ++i)
        if (in_deg[i] == 0) ready.push_back(i);
    std::sort(ready.begin(), ready.end(), node_less);
    std::vector<int> order;
    order.reserve(count);
    while (!ready.empty()) {
        const int v = ready.front();
        ready.erase(ready.begin());
        order.push_back(v);
        for (int w : succ[v])
            if (--in_deg[w] == 0) {
                ready.push_back(w);
                std::sort(ready.begin(), ready.end(), node_less);
            }
    }
    if (static_cast<int>(order.size()) != count)
        throw std::logic_error("topological_order: cycle detected");
    return order;
}

std::string HierarchyDag::to_dot() const {
    std::ostringstream os;
    os << "digraph hierarchy {\n";
    os << "  rankdir=TB;\n";
    os << "  node [shape=box];\n";
    for (int i : topological_order())
        os << "  s" << i << " [label=\"" << nodes[i].to_string() << "\"];\n";
    for (const auto& [sub, super] : edges)
        os << "  s" << super << " -> s" << sub << ";\n";
    os << "}\n";
    return os.str();
}

void to_json(nlohmann::json& j, const HierarchyDag& dag) {
    j = nlohmann::json{{"nodes", dag.nodes}, {"edges", nlohmann::json::array()}};
    for (const auto& [sub, super] : dag.edges)
        j["edges"].push_back({{"sub", sub}, {"super", super}});
}

}  // namespace dflearn::algebra
