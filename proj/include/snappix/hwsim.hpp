#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "snappix/common.hpp"
#include "snappix/encoder.hpp"
#include "snappix/ingest.hpp"
#include "snappix/patterns.hpp"

namespace snappix::hw {

// Irradiance is integrated as integer charge: one unit is 2^-16 of full
// scale, clamped to 16 bits. Quantized values are dyadic, so sums over up to
// 2^37 slots are exact in double and the simulator can be compared with the
// encoder bit for bit.
inline constexpr double kChargeUnitsPerFullScale = 65536.0;
inline constexpr std::uint32_t kMaxChargePerSlot = 65535;
inline constexpr double kPatternClockHz = 20e6;

inline std::uint32_t to_charge(double v) {
  const double q = std::nearbyint(std::clamp(v, 0.0, 1.0) * kChargeUnitsPerFullScale);
  return static_cast<std::uint32_t>(std::min<double>(q, kMaxChargePerSlot));
}

inline double from_charge(std::uint64_t q) { return static_cast<double>(q) / kChargeUnitsPerFullScale; }

// Clip with every value snapped to the charge grid.
inline VideoClip quantize_clip(const VideoClip& clip) {
  VideoClip out = clip;
  for (auto& f : out.frames)
    for (auto& v : f.data) v = from_charge(to_charge(v));
  return out;
}

struct PixelState {
  std::uint64_t pd_charge = 0;
  std::uint64_t fd_charge = 0;
  std::uint8_t dff_bit = 0;  // meaningful only while !gated
  bool gated = true;
};

// DFF chain of one tile. DFF 0 hangs off the pattern-in wire; each clock moves
// every bit one DFF further down the chain.
class TileShiftRegister {
 public:
  explicit TileShiftRegister(std::size_t length) : dffs_(length, 0) {}

  std::size_t length() const { return dffs_.size(); }
  std::uint64_t clocks() const { return clocks_; }
  bool gated() const { return gated_; }
  const std::vector<std::uint8_t>& contents() const { return dffs_; }

  void clock(std::uint8_t pattern_in) {
    if (gated_) throw ValidationError("clocking a power-gated shift register");
    for (std::size_t k = dffs_.size(); k > 1; --k) dffs_[k - 1] = dffs_[k - 2];
    if (!dffs_.empty()) dffs_[0] = pattern_in & 1u;
    ++clocks_;
  }

  // Streams one bit per pixel. The last pixel's bit goes in first, so after
  // length() clocks DFF k holds bits[k].
  void stream(std::span<const std::uint8_t> bits) {
    if (bits.size() != dffs_.size())
      throw ValidationError("stream needs exactly " + std::to_string(dffs_.size()) + " bits");
    for (std::size_t k = bits.size(); k > 0; --k) clock(bits[k - 1]);
  }

  void power_up() { gated_ = false; }

  // Gated DFFs lose their state.
  void power_gate() {
    gated_ = true;
    std::fill(dffs_.begin(), dffs_.end(), std::uint8_t{0});
  }

 private:
  std::vector<std::uint8_t> dffs_;
  std::uint64_t clocks_ = 0;
  bool gated_ = true;
};

enum class EventKind { PowerUp, StreamIn1, ResetPulse, PowerGate, Integrate, StreamIn2, TransferPulse };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::PowerUp: return "power_up";
    case EventKind::StreamIn1: return "stream_in_1";
    case EventKind::ResetPulse: return "reset_pulse";
    case EventKind::PowerGate: return "power_gate";
    case EventKind::Integrate: return "integrate";
    case EventKind::StreamIn2: return "stream_in_2";
    case EventKind::TransferPulse: return "transfer_pulse";
  }
  return "?";
}

struct TraceEvent {
  EventKind kind;
  std::uint64_t cycles;  // pattern-clock cycles spent in this event
};

struct SlotTrace {
  std::size_t slot = 0;
  std::vector<TraceEvent> events;
  std::uint64_t cycles = 0;
};

// The order every slot follows.
inline constexpr std::array<EventKind, 9> kSlotProtocol = {
    EventKind::PowerUp,   EventKind::StreamIn1, EventKind::ResetPulse,    EventKind::PowerGate, EventKind::Integrate,
    EventKind::PowerUp,   EventKind::StreamIn2, EventKind::TransferPulse, EventKind::PowerGate};

struct HwOptions {
  std::optional<std::uint64_t> pd_capacity;  // saturation, off by default
  std::optional<std::uint64_t> fd_capacity;
  double clock_hz = kPatternClockHz;
};

// Pixel array with one shift-register chain per tile. Chains stream
// concurrently, so a stream costs M*M cycles whatever the array size.
class PixelArray {
 public:
  PixelArray(std::size_t H, std::size_t W, std::size_t M, HwOptions opt = {})
      : H_(H), W_(W), M_(M), opt_(opt), pixels_(H * W) {
    if (M == 0 || H == 0 || W == 0 || H % M != 0 || W % M != 0)
      throw DimensionError("pixel array not divisible by tile size");
    chains_.assign((H / M) * (W / M), TileShiftRegister(M * M));
  }

  std::size_t height() const { return H_; }
  std::size_t width() const { return W_; }
  std::size_t tile() const { return M_; }
  const PixelState& pixel(std::size_t i, std::size_t j) const { return pixels_[i * W_ + j]; }
  const std::vector<PixelState>& pixels() const { return pixels_; }
  const std::vector<TileShiftRegister>& chains() const { return chains_; }

  // One exposure slot: stream, reset, integrate, stream, transfer.
  // `slot_bits` holds one bit per tile pixel (row-major), fed to every chain;
  // `irradiance` is in charge units, H*W row-major.
  SlotTrace run_slot(std::span<const std::uint8_t> slot_bits, std::span<const std::uint32_t> irradiance,
                     std::size_t slot_index = 0) {
    if (slot_bits.size() != M_ * M_) throw DimensionError("slot bits do not match tile size");
    if (irradiance.size() != H_ * W_) throw DimensionError("irradiance does not match array size");
    SlotTrace trace;
    trace.slot = slot_index;
    auto log = [&](EventKind k, std::uint64_t cycles) {
      trace.events.push_back({k, cycles});
      trace.cycles += cycles;
    };

    log(EventKind::PowerUp, 0);
    stream_all(slot_bits);
    log(EventKind::StreamIn1, M_ * M_);
    for_each_pixel([&](PixelState& px) {
      if (px.dff_bit) px.pd_charge = 0;  // M6 on, M1 follows the DFF
    });
    log(EventKind::ResetPulse, 1);
    gate_all();
    log(EventKind::PowerGate, 0);

    // The photodiode integrates in every slot; only the reset and transfer
    // decide what reaches the floating diffusion.
    for (std::size_t k = 0; k < pixels_.size(); ++k) {
      auto& pd = pixels_[k].pd_charge;
      pd += irradiance[k];
      if (opt_.pd_capacity) pd = std::min(pd, *opt_.pd_capacity);
    }
    log(EventKind::Integrate, 0);

    log(EventKind::PowerUp, 0);
    stream_all(slot_bits);
    log(EventKind::StreamIn2, M_ * M_);
    for_each_pixel([&](PixelState& px) {
      if (px.dff_bit) {  // M7 on, M3 follows the DFF
        px.fd_charge += px.pd_charge;
        if (opt_.fd_capacity) px.fd_charge = std::min(px.fd_charge, *opt_.fd_capacity);
        px.pd_charge = 0;
      }
    });
    log(EventKind::TransferPulse, 1);
    gate_all();
    log(EventKind::PowerGate, 0);
    return trace;
  }

  SlotTrace run_slot(std::span<const std::uint8_t> slot_bits, const Frame& irradiance, std::size_t slot_index = 0) {
    if (irradiance.height != H_ || irradiance.width != W_) throw DimensionError("frame does not match array size");
    std::vector<std::uint32_t> q(irradiance.data.size());
    std::transform(irradiance.data.begin(), irradiance.data.end(), q.begin(), to_charge);
    return run_slot(slot_bits, q, slot_index);
  }

 private:
  template <typename Fn>
  void for_each_pixel(Fn&& fn) {
    for (auto& px : pixels_) fn(px);
  }

  void stream_all(std::span<const std::uint8_t> bits) {
    const std::size_t nc = W_ / M_;
    for (std::size_t g = 0; g < chains_.size(); ++g) {
      auto& chain = chains_[g];
      chain.power_up();
      chain.stream(bits);
      const std::size_t row0 = (g / nc) * M_;
      const std::size_t col0 = (g % nc) * M_;
      for (std::size_t k = 0; k < M_ * M_; ++k) {
        auto& px = pixels_[(row0 + k / M_) * W_ + col0 + k % M_];
        px.gated = false;
        px.dff_bit = chain.contents()[k];
      }
    }
  }

  void gate_all() {
    for (auto& chain : chains_) chain.power_gate();
    for (auto& px : pixels_) {
      px.gated = true;
      px.dff_bit = 0;  // M1 and M3 held open
    }
  }

  std::size_t H_, W_, M_;
  HwOptions opt_;
  std::vector<PixelState> pixels_;
  std::vector<TileShiftRegister> chains_;
};

struct CaptureTiming {
  std::uint64_t cycles = 0;
  double seconds = 0.0;
  std::uint64_t cycles_per_slot = 0;
};

struct CaptureResult {
  CodedImage fd_image;                 // fd charge converted back to irradiance units
  std::vector<std::uint64_t> fd_charge;
  std::vector<std::uint64_t> pd_residual;
  std::vector<SlotTrace> traces;
  CaptureTiming timing;
};

// Cycles for one capture: every slot streams the tile pattern twice and
// fires two pulses.
inline std::uint64_t capture_cycles(std::size_t T, std::size_t M) { return T * (2 * M * M + 2); }

inline CaptureResult run_capture(const VideoClip& clip, const TilePattern& pattern, HwOptions opt = {}) {
  validate(pattern);
  validate(clip);
  if (clip.T() != pattern.T) throw DimensionError("clip length does not match pattern T");
  PixelArray array(clip.height(), clip.width(), pattern.M, opt);
  CaptureResult out;
  out.traces.reserve(pattern.T);
  for (std::size_t t = 0; t < pattern.T; ++t) {
    const auto bits = pattern.slot(t);
    out.traces.push_back(array.run_slot(bits, clip.frames[t], t));
    out.timing.cycles += out.traces.back().cycles;
  }
  out.timing.cycles_per_slot = pattern.T ? out.timing.cycles / pattern.T : 0;
  out.timing.seconds = static_cast<double>(out.timing.cycles) / opt.clock_hz;

  const auto counts = exposure_count(expand(pattern, clip.height(), clip.width()));
  out.fd_image = CodedImage(clip.height(), clip.width());
  out.fd_charge.resize(array.pixels().size());
  out.pd_residual.resize(array.pixels().size());
  for (std::size_t k = 0; k < array.pixels().size(); ++k) {
    out.fd_charge[k] = array.pixels()[k].fd_charge;
    out.pd_residual[k] = array.pixels()[k].pd_charge;
    out.fd_image.values[k] = from_charge(out.fd_charge[k]);
    out.fd_image.counts[k] = counts[k];
  }
  return out;
}

// CE control energy in pJ: e_ce per pixel per streamed slot.
inline double ce_control_energy(std::span<const SlotTrace> traces, double e_ce_per_slot, std::size_t pixels) {
  return static_cast<double>(traces.size()) * e_ce_per_slot * static_cast<double>(pixels);
}

}  // namespace snappix::hw
