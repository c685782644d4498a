#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <semaphore>
#include <thread>
#include <utility>

namespace lightde::rt {

// Vyukov-style multi-producer single-consumer queue. Producers exchange the
// tail pointer and link the previous node; the consumer walks head->next.
// FIFO per producer and across happens-before-ordered pushes. A counting
// semaphore parks the consumer between pushes.
template <typename T>
class MpscQueue {
  struct Node {
    std::atomic<Node*> next{nullptr};
    T value{};
  };

 public:
  MpscQueue() {
    Node* stub = new Node();
    head_ = stub;
    tail_.store(stub, std::memory_order_relaxed);
  }
  ~MpscQueue() {
    Node* n = head_;
    while (n) {
      Node* next = n->next.load(std::memory_order_relaxed);
      delete n;
      n = next;
    }
  }
  MpscQueue(const MpscQueue&) = delete;
  MpscQueue& operator=(const MpscQueue&) = delete;

  void push(T v) {
    Node* n = new Node();
    n->value = std::move(v);
    Node* prev = tail_.exchange(n, std::memory_order_acq_rel);
    prev->next.store(n, std::memory_order_release);
    enqueued_.fetch_add(1, std::memory_order_release);
    items_.release();
  }

  // Blocks until an element is available.
  T pop() {
    items_.acquire();
    Node* next = head_->next.load(std::memory_order_acquire);
    for (unsigned spins = 0; !next; ++spins) {
      // A producer is between its tail exchange and the link store.
      if (spins < 64)
        std::this_thread::yield();
      else
        std::this_thread::sleep_for(std::chrono::microseconds(50));
      next = head_->next.load(std::memory_order_acquire);
    }
    T v = std::move(next->value);
    Node* old = head_;
    head_ = next;
    delete old;
    dequeued_.fetch_add(1, std::memory_order_relaxed);
    return v;
  }

  std::uint64_t enqueued() const { return enqueued_.load(std::memory_order_acquire); }
  std::uint64_t dequeued() const { return dequeued_.load(std::memory_order_relaxed); }

 private:
  Node* head_;  // consumer-owned
  std::atomic<Node*> tail_;
  std::counting_semaphore<> items_{0};
  std::atomic<std::uint64_t> enqueued_{0};
  std::atomic<std::uint64_t> dequeued_{0};
};

}  // namespace lightde::rt
