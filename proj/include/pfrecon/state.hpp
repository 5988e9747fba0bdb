#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pfrecon/errors.hpp"
#include "pfrecon/spline.hpp"

namespace pfrecon {

/// Coefficients of three fields sharing one space, stored contiguously as
/// [u1 | u2 | u3]. Depending on the system the triple is (phi, sigma, p),
/// (Y, Z, P) or (q, z, r); u1 always carries the homogeneous Dirichlet
/// condition.
struct StateTriple {
  SpacePtr space;
  Vector data;
  double time = 0.0;

  StateTriple() = default;
  explicit StateTriple(SpacePtr s, double t = 0.0)
      : space(std::move(s)), data(3 * space->size(), 0.0), time(t) {}
  StateTriple(const Field& u1, const Field& u2, const Field& u3, double t = 0.0)
      : space(u1.space_ptr()), data(3 * u1.size()), time(t) {
    require_same_space(u1.space(), u2.space(), "StateTriple");
    require_same_space(u1.space(), u3.space(), "StateTriple");
    std::copy(u1.coefficients().begin(), u1.coefficients().end(), data.begin());
    std::copy(u2.coefficients().begin(), u2.coefficients().end(), data.begin() + static_cast<std::ptrdiff_t>(size()));
    std::copy(u3.coefficients().begin(), u3.coefficients().end(), data.begin() + static_cast<std::ptrdiff_t>(2 * size()));
  }

  std::size_t size() const noexcept { return space->size(); }
  std::span<double> u(int i) { return std::span<double>(data).subspan(i * size(), size()); }
  std::span<const double> u(int i) const { return std::span<const double>(data).subspan(i * size(), size()); }
  Field field(int i) const {
    auto s = u(i);
    return Field(space, Vector(s.begin(), s.end()));
  }
};

/// Time-ordered snapshots (t_n, U_n, Udot_n) of one solve. Snapshots live in
/// memory by default; `spill_to` moves them to a scratch file and serves
/// reads through a small cache.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(SpacePtr space) : space_(std::move(space)) {}

  const SpacePtr& space() const noexcept { return space_; }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }
  double time(std::size_t i) const { return times_.at(i); }
  const std::vector<double>& times() const noexcept { return times_; }
  double front_time() const { return times_.front(); }
  double back_time() const { return times_.back(); }

  void push_back(double t, std::span<const double> state, std::span<const double> rate) {
    if (state.size() != 3 * space_->size() || rate.size() != state.size())
      throw UsageError("Trajectory: snapshot size mismatch");
    if (!times_.empty() && !(t > times_.back()) && !(t < times_.back()))
      throw UsageError("Trajectory: duplicate time stamp");
    times_.push_back(t);
    if (file_) {
      write_record(times_.size() - 1, state, rate);
    } else {
      states_.emplace_back(state.begin(), state.end());
      rates_.emplace_back(rate.begin(), rate.end());
    }
  }

  std::span<const double> state(std::size_t i) const { return file_ ? cached(i).state : states_.at(i); }
  std::span<const double> rate(std::size_t i) const { return file_ ? cached(i).rate : rates_.at(i); }

  StateTriple triple(std::size_t i) const {
    StateTriple s(space_, times_.at(i));
    auto v = state(i);
    std::copy(v.begin(), v.end(), s.data.begin());
    return s;
  }

  /// Reverses snapshot order (used to return backward solves in forward time).
  void reverse() {
    if (file_) throw UsageError("Trajectory: cannot reverse a spilled trajectory");
    std::reverse(times_.begin(), times_.end());
    std::reverse(states_.begin(), states_.end());
    std::reverse(rates_.begin(), rates_.end());
  }

  /// Linear interpolation in time of field `i` at t. Times must be monotone.
  void interpolate(double t, int i, std::span<double> out) const {
    if (times_.empty()) throw UsageError("Trajectory: empty");
    const bool increasing = times_.size() < 2 || times_.back() > times_.front();
    const double lo = increasing ? times_.front() : times_.back();
    const double hi = increasing ? times_.back() : times_.front();
    const double tol = 1e-9 * std::max(1.0, std::abs(hi - lo));
    if (t < lo - tol || t > hi + tol)
      throw UsageError("Trajectory: background requested at t=" + std::to_string(t) +
                       " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    const std::size_t nf = space_->size();
    if (times_.size() == 1) {
      auto s = state(0).subspan(i * nf, nf);
      std::copy(s.begin(), s.end(), out.begin());
      return;
    }
    // locate k with t between times_[k] and times_[k+1]
    std::size_t k;
    if (increasing) {
      auto it = std::upper_bound(times_.begin(), times_.end(), t);
      k = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - times_.begin() - 1, 0,
                                                               static_cast<std::ptrdiff_t>(times_.size()) - 2));
    } else {
      auto it = std::upper_bound(times_.begin(), times_.end(), t, std::greater<double>());
      k = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - times_.begin() - 1, 0,
                                                               static_cast<std::ptrdiff_t>(times_.size()) - 2));
    }
    const double t0 = times_[k], t1 = times_[k + 1];
    const double w = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
    // copy first: with a spilled store the second access may evict the first
    Vector a(state(k).subspan(i * nf, nf).begin(), state(k).subspan(i * nf, nf).end());
    auto b = state(k + 1).subspan(i * nf, nf);
    for (std::size_t j = 0; j < nf; ++j) out[j] = (1.0 - w) * a[j] + w * b[j];
  }

  /// Moves all snapshots into a scratch file under `dir`.
  void spill_to(const std::filesystem::path& dir) {
    if (file_) return;
    std::filesystem::create_directories(dir);
    static int counter = 0;
    path_ = dir / ("trajectory_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "_" +
                   std::to_string(counter++) + ".bin");
    file_ = std::make_shared<std::fstream>(path_, std::ios::in | std::ios::out | std::ios::binary |
                                                      std::ios::trunc);
    if (!*file_) throw Error("Trajectory: cannot open scratch file " + path_.string());
    for (std::size_t i = 0; i < states_.size(); ++i) write_record(i, states_[i], rates_[i]);
    states_.clear();
    rates_.clear();
  }

  bool spilled() const noexcept { return static_cast<bool>(file_); }

  ~Trajectory() {
    if (file_ && file_.use_count() == 1) {
      file_->close();
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
  }
  Trajectory(const Trajectory&) = default;
  Trajectory(Trajectory&&) noexcept = default;
  Trajectory& operator=(const Trajectory&) = default;
  Trajectory& operator=(Trajectory&&) noexcept = default;

 private:
  struct Slot {
    std::size_t index = static_cast<std::size_t>(-1);
    Vector state, rate;
  };

  std::size_t record_bytes() const { return 2 * 3 * space_->size() * sizeof(double); }

  void write_record(std::size_t i, std::span<const double> s, std::span<const double> r) {
    file_->seekp(static_cast<std::streamoff>(i * record_bytes()));
    file_->write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size_bytes()));
    file_->write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(r.size_bytes()));
    if (!*file_) throw Error("Trajectory: write to scratch file failed");
  }

  const Slot& cached(std::size_t i) const {
    if (i >= times_.size()) throw UsageError("Trajectory: snapshot index out of range");
    for (auto& s : cache_)
      if (s.index == i) return s;
    Slot& s = cache_[next_slot_];
    next_slot_ = (next_slot_ + 1) % cache_.size();
    const std::size_t n = 3 * space_->size();
    s.state.resize(n);
    s.rate.resize(n);
    file_->seekg(static_cast<std::streamoff>(i * record_bytes()));
    file_->read(reinterpret_cast<char*>(s.state.data()), static_cast<std::streamsize>(n * sizeof(double)));
    file_->read(reinterpret_cast<char*>(s.rate.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!*file_) throw Error("Trajectory: read from scratch file failed");
    s.index = i;
    return s;
  }

  SpacePtr space_;
  std::vector<double> times_;
  std::vector<Vector> states_;
  std::vector<Vector> rates_;
  std::shared_ptr<std::fstream> file_;
  std::filesystem::path path_;
  mutable std::array<Slot, 4> cache_{};
  mutable std::size_t next_slot_ = 0;
};

}  // namespace pfrecon
