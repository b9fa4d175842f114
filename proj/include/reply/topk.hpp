#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace reply {

template <class S>
struct Scored {
    std::uint32_t id = 0;
    S score = S(0);
};

// Total order used for every ranking: higher score first, ties broken by
// lower id so results are deterministic.
template <class S>
inline bool ranks_before(const Scored<S>& a, const Scored<S>& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
}

// Bounded selection of the top k under ranks_before. Internally a min-heap
// whose root is the worst kept entry, so a stream element costs one compare
// unless it displaces the root.
template <class S>
class TopK {
  public:
    explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

    void push(std::uint32_t id, S score) {
        const Scored<S> entry{id, score};
        if (heap_.size() < k_) {
            heap_.push_back(entry);
            std::push_heap(heap_.begin(), heap_.end(), ranks_before<S>);
            return;
        }
        if (k_ == 0 || !ranks_before(entry, heap_.front())) return;
        std::pop_heap(heap_.begin(), heap_.end(), ranks_before<S>);
        heap_.back() = entry;
        std::push_heap(heap_.begin(), heap_.end(), ranks_before<S>);
    }

    // Kept entries in rank order (best first); consumes the heap.
    std::vector<Scored<S>> take_sorted() {
        std::sort(heap_.begin(), heap_.end(), ranks_before<S>);
        return std::move(heap_);
    }

    std::size_t size() const { return heap_.size(); }
    bool full() const { return heap_.size() >= k_; }

    // Score of the worst kept entry; only meaningful once full(). Lets hot
    // scan loops reject strictly-worse candidates without calling push.
    S worst_score() const { return heap_.front().score; }

  private:
    std::size_t k_;
    std::vector<Scored<S>> heap_;
};

// Top k of a dense score array, ids 0..n-1.
template <class S>
std::vector<Scored<S>> top_k_of(const S* scores, std::size_t n, std::size_t k) {
    TopK<S> sel(k);
    for (std::size_t i = 0; i < n; ++i) sel.push(static_cast<std::uint32_t>(i), scores[i]);
    return sel.take_sorted();
}

}  // namespace reply
