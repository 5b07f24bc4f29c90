#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace prlstm {

// Fixed-size pool of persistent workers with fork-join dispatch. parallel_for
// splits [0,n) into one contiguous chunk per worker; the caller blocks until
// the whole range is done, so each call is a synchronization barrier.
//
// Work is executed by exactly `workers()` threads; the calling thread only
// coordinates. Chunk boundaries depend solely on (n, workers), never on
// scheduling, and chunks are disjoint, so any computation whose items write
// disjoint outputs is deterministic.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int workers() const { return static_cast<int>(threads_.size()); }

  // fn(begin, end) is called once per worker with its chunk of [0, n).
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

  // One call of fn(worker_index) per worker.
  void run_per_worker(const std::function<void(int)>& fn);

 private:
  void worker_loop(int index);

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  std::function<void(int)> job_;
  uint64_t epoch_ = 0;
  int remaining_ = 0;
  bool stop_ = false;
};

}  // namespace prlstm
