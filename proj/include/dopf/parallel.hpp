#pragma once

#include <condition_variable>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace dopf {

/// Contiguous, nearly even assignment of subsystem indices to workers.
struct ShardPlan {
  std::vector<std::pair<int, int>> ranges;  // [begin, end) per worker

  int worker_count() const { return static_cast<int>(ranges.size()); }
  int shard_size(int worker) const { return ranges[worker].second - ranges[worker].first; }
};

/// Splits [0, count) into `workers` contiguous ranges whose sizes differ by
/// at most one. Deterministic.
ShardPlan shard(int count, int workers);

/// Fork-join pool: run() executes body(s) exactly once for every s and acts
/// as a barrier. Bodies must only write state owned by their own subsystem;
/// all cross-subsystem reductions belong after the barrier, which keeps
/// results independent of the worker count.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int worker_count() const { return workers_; }

  /// Shards [0, count) across the pool. A throwing body aborts the pass;
  /// the error is rethrown here naming the subsystem.
  void run(int count, const std::function<void(int)>& body);
  void run(const ShardPlan& plan, const std::function<void(int)>& body);

 private:
  void worker_main(int worker);
  void execute_range(int begin, int end, const std::function<void(int)>& body);

  int workers_;
  std::vector<std::thread> threads_;

  std::mutex mutex_;
  std::condition_variable start_cv_, done_cv_;
  unsigned long generation_ = 0;
  int pending_ = 0;
  bool stopping_ = false;
  const ShardPlan* plan_ = nullptr;
  const std::function<void(int)>* body_ = nullptr;

  bool failed_ = false;
  int failed_subsystem_ = -1;
  std::string failure_message_;
};

}  // namespace dopf
