// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace proxyv {

/// Per-thread tally of forward-pass arithmetic.
///
/// `macs` counts multiply-accumulates issued by matrix products; `adds` counts
/// standalone additions (window pooling). Counting is off unless a MacScope is
/// alive, and is suspended while a tape runs backward.
struct MacCounter {
    std::uint64_t macs = 0;
    std::uint64_t adds = 0;
    int depth = 0;
    int suspended = 0;

    bool active() const { return depth > 0 && suspended == 0; }
    std::uint64_t total() const { return macs + adds; }

    static MacCounter& local();
};

inline void count_macs(std::uint64_t n) {
    auto& c = MacCounter::local();
    if (c.active()) c.macs += n;
}

inline void count_adds(std::uint64_t n) {
    auto& c = MacCounter::local();
    if (c.active()) c.adds += n;
}

/// Enables counting for its lifetime; reads are relative to construction.
class MacScope {
  public:
    MacScope() : start_macs_(MacCounter::local().macs), start_adds_(MacCounter::local().adds) {
        ++MacCounter::local().depth;
    }
    ~MacScope() { --MacCounter::local().depth; }
    MacScope(const MacScope&) = delete;
    MacScope& operator=(const MacScope&) = delete;

    std::uint64_t macs() const { return MacCounter::local().macs - start_macs_; }
    std::uint64_t adds() const { return MacCounter::local().adds - start_adds_; }
    std::uint64_t total() const { return macs() + adds(); }

  private:
    std::uint64_t start_macs_;
    std::uint64_t start_adds_;
};

class MacSuspend {
  public:
    MacSuspend() { ++MacCounter::local().suspended; }
    ~MacSuspend() { --MacCounter::local().suspended; }
    MacSuspend(const MacSuspend&) = delete;
    MacSuspend& operator=(const MacSuspend&) = delete;
};

}  // namespace proxyv
