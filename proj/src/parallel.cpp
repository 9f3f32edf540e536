#include "dopf/parallel.hpp"

#include <stdexcept>

namespace dopf {

ShardPlan shard(int count, int workers) {
  if (count < 0) throw std::invalid_argument("shard: negative count");
  if (workers < 1) throw std::invalid_argument("shard: workers must be >= 1");
  ShardPlan plan;
  plan.ranges.reserve(workers);
  const int base = count / workers;
  const int remainder = count % workers;
  int begin = 0;
  for (int w = 0; w < workers; ++w) {
    const int size = base + (w < remainder ? 1 : 0);
    plan.ranges.emplace_back(begin, begin + size);
    begin += size;
  }
  return plan;
}

WorkerPool::WorkerPool(int workers) : workers_(workers) {
  if (workers < 1) throw std::invalid_argument("WorkerPool: workers must be >= 1");
  if (workers_ == 1) return;  // single-worker pools run inline
  threads_.reserve(workers_);
  for (int w = 0; w < workers_; ++w)
    threads_.emplace_back([this, w] { worker_main(w); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  start_cv_.notify_all();
  for (std::thread& t : threads_) t.join();
}

void WorkerPool::execute_range(int begin, int end, const std::function<void(int)>& body) {
  for (int s = begin; s < end; ++s) {
    try {
      body(s);
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex_);
      if (!failed_) {
        failed_ = true;
        failed_subsystem_ = s;
        failure_message_ = e.what();
      }
      return;  // abandon the rest of this shard
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!failed_) {
        failed_ = true;
        failed_subsystem_ = s;
        failure_message_ = "unknown error";
      }
      return;
    }
  }
}

void WorkerPool::worker_main(int worker) {
  unsigned long seen_generation = 0;
  while (true) {
    const ShardPlan* plan = nullptr;
    const std::function<void(int)>* body = nullptr;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stopping_ || generation_ != seen_generation; });
      if (stopping_) return;
      seen_generation = generation_;
      plan = plan_;
      body = body_;
    }
    if (worker < plan->worker_count()) {
      const auto [begin, end] = plan->ranges[worker];
      execute_range(begin, end, *body);
    }
    {
      std::lock_guard lock(mutex_);
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }
}

void WorkerPool::run(int count, const std::function<void(int)>& body) {
  run(shard(count, workers_), body);
}

void WorkerPool::run(const ShardPlan& plan, const std::function<void(int)>& body) {
  if (plan.worker_count() > workers_)
    throw std::invalid_argument("WorkerPool: plan has more shards than workers");

  failed_ = false;
  failed_subsystem_ = -1;
  failure_message_.clear();

  if (workers_ == 1) {
    for (const auto& [begin, end] : plan.ranges) execute_range(begin, end, body);
  } else {
    {
      std::lock_guard lock(mutex_);
      plan_ = &plan;
      body_ = &body;
      pending_ = workers_;
      ++generation_;
    }
    start_cv_.notify_all();
    {
      std::unique_lock lock(mutex_);
      done_cv_.wait(lock, [&] { return pending_ == 0; });
    }
  }

  if (failed_)
    throw std::runtime_error("subsystem " + std::to_string(failed_subsystem_) +
                             ": " + failure_message_);
}

}  // namespace dopf
