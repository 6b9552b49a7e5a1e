#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mmf/error.hpp"

namespace mmf {

struct TreeNode {
    int parent = -1;
    std::vector<int> children;
    std::string name;
};

/// Rooted taxonomic rank tree with uniform leaf depth. Leaves are the taxa;
/// taxon index j maps to a leaf node through leaf_order.
///
/// Construction validates the topology and, when leaves sit at different
/// depths, subdivides the incoming edge of every shallow leaf with unary
/// nodes until all leaves are at the maximum depth.
class RankTree {
  public:
    RankTree() = default;

    explicit RankTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) { build(); }

    int root() const { return root_; }
    /// Edges on every root-to-leaf path.
    int depth() const { return depth_; }
    /// Total node count (P); edges = P - 1.
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int leaf_count() const { return static_cast<int>(leaf_order_.size()); }
    int inserted_nodes() const { return inserted_; }

    const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    const std::vector<TreeNode>& nodes() const { return nodes_; }

    int leaf_node(int taxon) const { return leaf_order_[static_cast<std::size_t>(taxon)]; }
    /// Taxon index of a node, or -1 for internal nodes.
    int taxon_of(int node_id) const { return taxon_of_[static_cast<std::size_t>(node_id)]; }
    const std::string& leaf_name(int taxon) const { return node(leaf_node(taxon)).name; }

    std::vector<std::string> leaf_names() const {
        std::vector<std::string> out;
        out.reserve(leaf_order_.size());
        for (int id : leaf_order_) out.push_back(node(id).name);
        return out;
    }

    /// Children before parents.
    const std::vector<int>& postorder() const { return postorder_; }
    /// Parents before children.
    const std::vector<int>& preorder() const { return preorder_; }

    /// Number of edges above the leaf of `taxon` that lead to no other leaf.
    int private_edges(int taxon) const { return private_edges_[static_cast<std::size_t>(taxon)]; }

    /// Leaves in left-to-right traversal order (taxon indices).
    std::vector<int> traversal_order() const {
        std::vector<int> out;
        for (int id : preorder_)
            if (taxon_of(id) >= 0) out.push_back(taxon_of(id));
        return out;
    }

    /// Reindexes taxa so that taxon j is the leaf named names[j]. Throws a
    /// ValidationError listing the symmetric difference when the sets differ.
    RankTree aligned_to(const std::vector<std::string>& names) const {
        std::map<std::string, int> by_name;
        for (int j = 0; j < leaf_count(); ++j) by_name.emplace(leaf_name(j), leaf_node(j));
        std::set<std::string> wanted(names.begin(), names.end());
        std::vector<std::string> missing_in_tree, missing_in_counts;
        for (const auto& nm : names)
            if (!by_name.count(nm)) missing_in_tree.push_back(nm);
        for (const auto& [nm, id] : by_name)
            if (!wanted.count(nm)) missing_in_counts.push_back(nm);
        if (!missing_in_tree.empty() || !missing_in_counts.empty() || wanted.size() != names.size()) {
            std::ostringstream msg;
            msg << "tree leaves do not match count columns;";
            if (!missing_in_tree.empty()) {
                msg << " not in tree:";
                for (const auto& nm : missing_in_tree) msg << ' ' << nm;
                msg << ';';
            }
            if (!missing_in_counts.empty()) {
                msg << " not in counts:";
                for (const auto& nm : missing_in_counts) msg << ' ' << nm;
                msg << ';';
            }
            if (wanted.size() != names.size()) msg << " duplicate column names;";
            throw ValidationError(msg.str());
        }
        RankTree out = *this;
        for (std::size_t j = 0; j < names.size(); ++j) out.leaf_order_[j] = by_name.at(names[j]);
        out.index_leaves();
        return out;
    }

  private:
    void build() {
        if (nodes_.empty()) throw ValidationError("empty tree");
        root_ = -1;
        for (std::size_t v = 0; v < nodes_.size(); ++v) {
            const int p = nodes_[v].parent;
            if (p < 0) {
                if (root_ >= 0) throw ValidationError("tree has more than one root");
                root_ = static_cast<int>(v);
            } else if (p >= node_count()) {
                throw ValidationError("tree node has an out-of-range parent");
            }
        }
        if (root_ < 0) throw ValidationError("tree has no root");
        for (std::size_t v = 0; v < nodes_.size(); ++v)
            for (int c : nodes_[v].children)
                if (c < 0 || c >= node_count() || nodes_[static_cast<std::size_t>(c)].parent != static_cast<int>(v))
                    throw ValidationError("tree parent/children links are inconsistent");

        // depth of every node; detects cycles and unreachable nodes
        std::vector<int> node_depth(nodes_.size(), -1);
        std::vector<int> stack{root_};
        node_depth[static_cast<std::size_t>(root_)] = 0;
        std::size_t visited = 0;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            ++visited;
            for (int c : nodes_[static_cast<std::size_t>(v)].children) {
                if (node_depth[static_cast<std::size_t>(c)] >= 0) throw ValidationError("tree contains a cycle");
                node_depth[static_cast<std::size_t>(c)] = node_depth[static_cast<std::size_t>(v)] + 1;
                stack.push_back(c);
            }
        }
        if (visited != nodes_.size()) throw ValidationError("tree has nodes unreachable from the root");
        if (nodes_[static_cast<std::size_t>(root_)].children.empty())
            throw ValidationError("tree must have at least one edge");

        depth_ = 0;
        for (std::size_t v = 0; v < nodes_.size(); ++v)
            if (nodes_[v].children.empty()) depth_ = std::max(depth_, node_depth[v]);

        // subdivide the incoming edge of shallow leaves
        inserted_ = 0;
        const std::size_t original = nodes_.size();
        for (std::size_t v = 0; v < original; ++v) {
            if (!nodes_[v].children.empty()) continue;
            int deficit = depth_ - node_depth[v];
            while (deficit-- > 0) {
                const int leaf = static_cast<int>(v);
                const int parent = nodes_[v].parent;
                const int fresh = static_cast<int>(nodes_.size());
                TreeNode unary;
                unary.parent = parent;
                unary.children = {leaf};
                auto& siblings = nodes_[static_cast<std::size_t>(parent)].children;
                std::replace(siblings.begin(), siblings.end(), leaf, fresh);
                nodes_.push_back(std::move(unary));
                nodes_[v].parent = fresh;
                ++inserted_;
            }
        }

        preorder_.clear();
        postorder_.clear();
        std::vector<std::pair<int, bool>> work{{root_, false}};
        while (!work.empty()) {
            auto [v, expanded] = work.back();
            work.pop_back();
            if (expanded) {
                postorder_.push_back(v);
                continue;
            }
            preorder_.push_back(v);
            work.emplace_back(v, true);
            const auto& ch = nodes_[static_cast<std::size_t>(v)].children;
            for (auto it = ch.rbegin(); it != ch.rend(); ++it) work.emplace_back(*it, false);
        }

        leaf_order_.clear();
        std::set<std::string> seen;
        for (int v : preorder_) {
            const auto& nd = nodes_[static_cast<std::size_t>(v)];
            if (!nd.children.empty()) continue;
            if (nd.name.empty()) throw ValidationError("tree leaf without a name");
            if (!seen.insert(nd.name).second) throw ValidationError("duplicate leaf name: " + nd.name);
            leaf_order_.push_back(v);
        }
        index_leaves();
    }

    void index_leaves() {
        taxon_of_.assign(nodes_.size(), -1);
        for (std::size_t j = 0; j < leaf_order_.size(); ++j)
            taxon_of_[static_cast<std::size_t>(leaf_order_[j])] = static_cast<int>(j);

        std::vector<int> leaves_below(nodes_.size(), 0);
        for (int v : postorder_) {
            auto& nd = nodes_[static_cast<std::size_t>(v)];
            if (nd.children.empty()) leaves_below[static_cast<std::size_t>(v)] = 1;
            for (int c : nd.children)
                leaves_below[static_cast<std::size_t>(v)] += leaves_below[static_cast<std::size_t>(c)];
        }
        private_edges_.assign(leaf_order_.size(), 0);
        for (std::size_t j = 0; j < leaf_order_.size(); ++j) {
            int v = leaf_order_[j];
            int edges = 0;
            while (v != root_ && leaves_below[static_cast<std::size_t>(v)] == 1) {
                ++edges;
                v = nodes_[static_cast<std::size_t>(v)].parent;
            }
            private_edges_[j] = edges;
        }
    }

    std::vector<TreeNode> nodes_;
    int root_ = -1;
    int depth_ = 0;
    int inserted_ = 0;
    std::vector<int> leaf_order_;
    std::vector<int> taxon_of_;
    std::vector<int> preorder_;
    std::vector<int> postorder_;
    std::vector<int> private_edges_;
};

namespace detail {

class NewickReader {
  public:
    explicit NewickReader(std::string_view text) : text_(text) {}

    std::vector<TreeNode> read() {
        skip_space();
        if (pos_ >= text_.size()) throw ValidationError("newick: empty input");
        parse_subtree(-1);
        skip_space();
        if (pos_ >= text_.size() || text_[pos_] != ';') fail("expected ';' at end of tree");
        ++pos_;
        skip_space();
        if (pos_ != text_.size()) fail("trailing characters after ';'");
        return std::move(nodes_);
    }

  private:
    [[noreturn]] void fail(const std::string& why) const {
        throw ValidationError("newick: " + why + " (at offset " + std::to_string(pos_) + ")");
    }

    void skip_space() {
        while (pos_ < text_.size()) {
            const char ch = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(ch))) {
                ++pos_;
            } else if (ch == '[') {
                const auto close = text_.find(']', pos_);
                if (close == std::string_view::npos) fail("unterminated comment");
                pos_ = close + 1;
            } else {
                break;
            }
        }
    }

    static bool is_delim(char ch) {
        return ch == '(' || ch == ')' || ch == ',' || ch == ':' || ch == ';' || ch == '[' || ch == '\'';
    }

    int parse_subtree(int parent) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(TreeNode{parent, {}, {}});
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            ++pos_;
            while (true) {
                const int child = parse_subtree(id);
                nodes_[static_cast<std::size_t>(id)].children.push_back(child);
                skip_space();
                if (pos_ >= text_.size()) fail("unbalanced parentheses");
                if (text_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                if (text_[pos_] == ')') {
                    ++pos_;
                    break;
                }
                fail(std::string("unexpected character '") + text_[pos_] + "'");
            }
        }
        nodes_[static_cast<std::size_t>(id)].name = parse_label();
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ':') {
            ++pos_;
            skip_space();
            const std::size_t start = pos_;
            while (pos_ < text_.size() && !is_delim(text_[pos_]) && !std::isspace(static_cast<unsigned char>(text_[pos_])))
                ++pos_;
            const std::string_view len = text_.substr(start, pos_ - start);
            if (len.empty()) fail("missing branch length after ':'");
            // branch lengths are validated but otherwise ignored
            try {
                std::size_t used = 0;
                (void)std::stod(std::string(len), &used);
                if (used != len.size()) fail("invalid branch length");
            } catch (const std::logic_error&) {
                fail("invalid branch length");
            }
        }
        if (nodes_[static_cast<std::size_t>(id)].children.empty() && nodes_[static_cast<std::size_t>(id)].name.empty())
            fail("leaf without a name");
        return id;
    }

    std::string parse_label() {
        skip_space();
        std::string out;
        if (pos_ < text_.size() && text_[pos_] == '\'') {
            ++pos_;
            while (true) {
                if (pos_ >= text_.size()) fail("unterminated quoted label");
                if (text_[pos_] == '\'') {
                    if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
                        out.push_back('\'');
                        pos_ += 2;
                        continue;
                    }
                    ++pos_;
                    break;
                }
                out.push_back(text_[pos_++]);
            }
            return out;
        }
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !is_delim(text_[pos_])) ++pos_;
        out = std::string(text_.substr(start, pos_ - start));
        // surrounding whitespace is not part of the name
        const auto first = out.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) return {};
        const auto last = out.find_last_not_of(" \t\r\n");
        return out.substr(first, last - first + 1);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::vector<TreeNode> nodes_;
};

inline std::string newick_quote(const std::string& name) {
    const bool plain = std::none_of(name.begin(), name.end(), [](char ch) {
        return std::isspace(static_cast<unsigned char>(ch)) || ch == '(' || ch == ')' || ch == ',' || ch == ':' ||
               ch == ';' || ch == '[' || ch == ']' || ch == '\'';
    });
    if (plain) return name;
    std::string out = "'";
    for (char ch : name) {
        if (ch == '\'') out += "''";
        else out.push_back(ch);
    }
    return out + "'";
}

inline void write_newick_node(const RankTree& tree, int v, std::string& out) {
    const auto& nd = tree.node(v);
    if (!nd.children.empty()) {
        out.push_back('(');
        for (std::size_t c = 0; c < nd.children.size(); ++c) {
            if (c) out.push_back(',');
            write_newick_node(tree, nd.children[c], out);
        }
        out.push_back(')');
    }
    out += newick_quote(nd.name);
}

}  // namespace detail

/// Parses a Newick string. Branch lengths and comments are accepted and
/// ignored; leaves must be named and unique. Ragged depths are normalized
/// (see RankTree::inserted_nodes()).
inline RankTree parse_newick(std::string_view text) { return RankTree(detail::NewickReader(text).read()); }

inline std::string to_newick(const RankTree& tree) {
    std::string out;
    detail::write_newick_node(tree, tree.root(), out);
    out.push_back(';');
    return out;
}

/// Complete `arity`-ary tree of depth `depth`, pruned to its `leaves` leftmost
/// leaves. Leaves are named taxon1..taxonN in left-to-right order.
inline RankTree balanced_tree(int leaves, int depth, int arity) {
    if (leaves < 1 || depth < 1 || arity < 1) throw ValidationError("balanced_tree: sizes must be positive");
    long long capacity = 1;
    for (int d = 0; d < depth; ++d) {
        capacity *= arity;
        if (capacity >= leaves) break;
    }
    if (capacity < leaves) throw ValidationError("balanced_tree: arity^depth is smaller than the leaf count");

    std::vector<TreeNode> nodes{TreeNode{}};
    int placed = 0;
    // depth-first construction in left-to-right order keeps only needed nodes
    auto grow = [&](auto&& self, int parent, int level) -> void {
        for (int a = 0; a < arity && placed < leaves; ++a) {
            const int id = static_cast<int>(nodes.size());
            nodes.push_back(TreeNode{parent, {}, {}});
            nodes[static_cast<std::size_t>(parent)].children.push_back(id);
            if (level + 1 == depth) {
                nodes[static_cast<std::size_t>(id)].name = "taxon" + std::to_string(++placed);
            } else {
                self(self, id, level + 1);
            }
        }
    };
    grow(grow, 0, 0);
    return RankTree(std::move(nodes));
}

}  // namespace mmf
