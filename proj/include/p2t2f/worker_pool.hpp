#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace p2t2f {

// Fixed set of threads executing bulk-synchronous rounds. run(n, fn) calls
// fn(p) for every p in [0, n), task p always on thread p % size(), and
// returns once all calls finished (the round barrier). The first exception
// thrown by any task is rethrown from run().
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t threads) : size_(threads == 0 ? 1 : threads) {
    // the calling thread serves slot 0
    for (std::size_t t = 1; t < size_; ++t) threads_.emplace_back([this, t] { loop(t); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    start_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const noexcept { return size_; }

  void run(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (size_ == 1) {
      for (std::size_t p = 0; p < n; ++p) fn(p);
      return;
    }
    {
      std::lock_guard lock(mu_);
      task_ = &fn;
      tasks_ = n;
      pending_ = size_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    start_cv_.notify_all();
    execute(0);
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    task_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void execute(std::size_t slot) {
    for (std::size_t p = slot; p < tasks_; p += size_) {
      try {
        (*task_)(p);
      } catch (...) {
        std::lock_guard lock(mu_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  void loop(std::size_t slot) {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      execute(slot);
      {
        std::lock_guard lock(mu_);
        --pending_;
      }
      done_cv_.notify_one();
    }
  }

  std::size_t size_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t tasks_ = 0;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

}  // namespace p2t2f
