#include "prlstm/threadpool.hpp"

#include <algorithm>
#include <stdexcept>

namespace prlstm {

WorkerPool::WorkerPool(int workers) {
  if (workers < 1) throw std::invalid_argument("WorkerPool: workers must be >= 1");
  threads_.reserve(workers);
  for (int i = 0; i < workers; i++) {
    threads_.emplace_back([this, i] { worker_loop(i); });
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard<std::mutex> lk(mutex_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::worker_loop(int index) {
  uint64_t seen = 0;
  for (;;) {
    std::function<void(int)> job;
    {
      std::unique_lock<std::mutex> lk(mutex_);
      cv_work_.wait(lk, [&] { return stop_ || epoch_ != seen; });
      if (stop_) return;
      seen = epoch_;
      job = job_;
    }
    job(index);
    {
      std::lock_guard<std::mutex> lk(mutex_);
      if (--remaining_ == 0) cv_done_.notify_one();
    }
  }
}

void WorkerPool::run_per_worker(const std::function<void(int)>& fn) {
  std::unique_lock<std::mutex> lk(mutex_);
  job_ = fn;
  remaining_ = workers();
  epoch_++;
  cv_work_.notify_all();
  cv_done_.wait(lk, [&] { return remaining_ == 0; });
}

void WorkerPool::parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) {
    run_per_worker([](int) {});  // still a barrier, so depth accounting stays honest
    return;
  }
  const int64_t p = workers();
  run_per_worker([&](int w) {
    int64_t chunk = (n + p - 1) / p;
    int64_t begin = std::min<int64_t>(n, w * chunk);
    int64_t end = std::min<int64_t>(n, begin + chunk);
    if (begin < end) fn(begin, end);
  });
}

}  // namespace prlstm
