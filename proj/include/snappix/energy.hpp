#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "snappix/common.hpp"

namespace snappix {

// Per-pixel energy constants, all in pJ.
struct EnergyConfig {
  double e_sense = 220.0;             // full sensing energy per 8-bit readout
  double adc_mipi_fraction = 0.956;   // share of e_sense spent in ADC + MIPI
  double e_ce = 9.0;                  // CE control overhead per pixel per slot
  double e_wifi = 43.04;              // passive WiFi, per 8-bit pixel
  double e_lora = 7.4e6;              // LoRa backscatter, per 8-bit pixel
  std::size_t T = 16;
  unsigned bits_per_pixel = 8;        // raw (conventional) readout depth
  unsigned coded_bits_per_pixel = 8;  // coded readout depth
  bool ce_per_slot = true;            // false: CE overhead charged once per readout
};

// Long-range saving claimed alongside the LoRa constant; the constant as
// printed does not reproduce it (see long_range_discrepancy()).
inline constexpr double kClaimedLongRangeSaving = 15.4;
inline constexpr double kClaimedShortRangeSaving = 7.6;

enum class Capture { Conventional, Coded };
enum class Link { None, ShortWifi, LongLora };

inline Link parse_link(std::string_view s) {
  if (s == "none") return Link::None;
  if (s == "short_wifi" || s == "short-wifi" || s == "wifi") return Link::ShortWifi;
  if (s == "long_lora" || s == "long-lora" || s == "lora") return Link::LongLora;
  throw UsageError("unknown link '" + std::string(s) + "'");
}

inline std::string_view to_string(Link l) {
  switch (l) {
    case Link::None: return "none";
    case Link::ShortWifi: return "short_wifi";
    case Link::LongLora: return "long_lora";
  }
  return "?";
}

inline void validate(const EnergyConfig& cfg) {
  for (double v : {cfg.e_sense, cfg.e_ce, cfg.e_wifi, cfg.e_lora})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("energy constants must be finite and >= 0");
  if (!(cfg.adc_mipi_fraction >= 0.0 && cfg.adc_mipi_fraction <= 1.0))
    throw ValidationError("adc_mipi_fraction must lie in [0,1]");
  if (cfg.T == 0) throw ValidationError("T must be >= 1");
  if (cfg.bits_per_pixel == 0 || cfg.coded_bits_per_pixel == 0) throw ValidationError("bit depths must be >= 1");
}

struct EnergyBreakdown {
  double analog = 0.0;      // exposure / pixel analog chain, paid every slot
  double readout = 0.0;     // ADC + MIPI
  double ce_control = 0.0;  // pattern streaming
  double wireless = 0.0;
  double total = 0.0;       // analog + readout + ce_control + wireless
};

struct EnergyReport {
  Link link = Link::None;
  EnergyBreakdown conventional;
  EnergyBreakdown coded;
  double ratio = 0.0;  // conventional.total / coded.total
};

inline double link_energy(const EnergyConfig& cfg, Link link) {
  switch (link) {
    case Link::None: return 0.0;
    case Link::ShortWifi: return cfg.e_wifi;
    case Link::LongLora: return cfg.e_lora;
  }
  return 0.0;
}

// Energy per pixel position over one T-slot capture window.
//
// Conventional capture reads out and transmits every slot. Coded capture
// still runs the analog chain every slot but pays ADC + MIPI and the link
// once, at the coded bit depth, plus the CE pattern-streaming overhead.
inline EnergyBreakdown capture_energy(const EnergyConfig& cfg, Capture capture, Link link) {
  validate(cfg);
  const double T = static_cast<double>(cfg.T);
  const double e_readout = cfg.adc_mipi_fraction * cfg.e_sense;
  const double e_analog = (1.0 - cfg.adc_mipi_fraction) * cfg.e_sense;
  const double e_link = link_energy(cfg, link);
  EnergyBreakdown b;
  if (capture == Capture::Conventional) {
    b.analog = T * e_analog;
    b.readout = T * e_readout;
    b.wireless = T * e_link;
  } else {
    const double depth = static_cast<double>(cfg.coded_bits_per_pixel) / static_cast<double>(cfg.bits_per_pixel);
    b.analog = T * e_analog;
    b.readout = e_readout * depth;
    b.ce_control = cfg.ce_per_slot ? T * cfg.e_ce : cfg.e_ce;
    b.wireless = e_link * depth;
  }
  b.total = b.analog + b.readout + b.ce_control + b.wireless;
  return b;
}

inline EnergyReport edge_energy(const EnergyConfig& cfg, Link link) {
  EnergyReport r;
  r.link = link;
  r.conventional = capture_energy(cfg, Capture::Conventional, link);
  r.coded = capture_energy(cfg, Capture::Coded, link);
  r.ratio = r.conventional.total / r.coded.total;
  return r;
}

// Reduction of ADC/MIPI and transmission volume: T at equal bit depths.
inline double transmission_reduction(const EnergyConfig& cfg) {
  validate(cfg);
  return static_cast<double>(cfg.T) * cfg.bits_per_pixel / static_cast<double>(cfg.coded_bits_per_pixel);
}

// LoRa per-pixel cost that would make the long-range ratio equal `target`.
// Solves T (e_sense + L) = target * (coded fixed part + L) for L.
inline double lora_cost_for_ratio(const EnergyConfig& cfg, double target) {
  EnergyConfig c = cfg;
  c.coded_bits_per_pixel = c.bits_per_pixel;
  const auto conv = capture_energy(c, Capture::Conventional, Link::None);
  const auto coded = capture_energy(c, Capture::Coded, Link::None);
  const double T = static_cast<double>(c.T);
  return (target * coded.total - conv.total) / (T - target);
}

struct LongRangeDiscrepancy {
  double computed_ratio;
  double claimed_ratio;
  double e_lora_configured;
  double e_lora_matching_claim;
};

inline LongRangeDiscrepancy long_range_discrepancy(const EnergyConfig& cfg) {
  return {edge_energy(cfg, Link::LongLora).ratio, kClaimedLongRangeSaving, cfg.e_lora,
          lora_cost_for_ratio(cfg, kClaimedLongRangeSaving)};
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParameter { ESense, AdcMipiFraction, ECe, EWifi, ELora, T };

inline SweepParameter parse_sweep_parameter(std::string_view s) {
  if (s == "e_sense") return SweepParameter::ESense;
  if (s == "adc_mipi_fraction") return SweepParameter::AdcMipiFraction;
  if (s == "e_ce") return SweepParameter::ECe;
  if (s == "e_wifi") return SweepParameter::EWifi;
  if (s == "e_lora") return SweepParameter::ELora;
  if (s == "T") return SweepParameter::T;
  throw UsageError("unknown sweep parameter '" + std::string(s) + "'");
}

inline std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::ESense: return "e_sense";
    case SweepParameter::AdcMipiFraction: return "adc_mipi_fraction";
    case SweepParameter::ECe: return "e_ce";
    case SweepParameter::EWifi: return "e_wifi";
    case SweepParameter::ELora: return "e_lora";
    case SweepParameter::T: return "T";
  }
  return "?";
}

struct SweepRow {
  double value;
  EnergyReport report;
};

inline std::vector<SweepRow> sweep(const EnergyConfig& cfg, SweepParameter param, const std::vector<double>& values,
                                   Link link) {
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (double v : values) {
    EnergyConfig c = cfg;
    switch (param) {
      case SweepParameter::ESense: c.e_sense = v; break;
      case SweepParameter::AdcMipiFraction: c.adc_mipi_fraction = v; break;
      case SweepParameter::ECe: c.e_ce = v; break;
      case SweepParameter::EWifi: c.e_wifi = v; break;
      case SweepParameter::ELora: c.e_lora = v; break;
      case SweepParameter::T:
        if (!(v >= 1.0) || v != std::floor(v)) throw ValidationError("T sweep values must be positive integers");
        c.T = static_cast<std::size_t>(v);
        break;
    }
    rows.push_back({v, edge_energy(c, link)});
  }
  return rows;
}

inline std::string energy_csv_header() {
  return "parameter,value,link,conv_analog_pj,conv_readout_pj,conv_ce_pj,conv_wireless_pj,conv_total_pj,"
         "ce_analog_pj,ce_readout_pj,ce_ce_pj,ce_wireless_pj,ce_total_pj,ratio";
}

inline std::string energy_csv_row(std::string_view parameter, double value, const EnergyReport& r) {
  std::ostringstream out;
  out << std::setprecision(10) << parameter << ',' << value << ',' << to_string(r.link);
  for (const auto* b : {&r.conventional, &r.coded})
    out << ',' << b->analog << ',' << b->readout << ',' << b->ce_control << ',' << b->wireless << ',' << b->total;
  out << ',' << r.ratio;
  return out.str();
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, SweepParameter param) {
  std::ostringstream out;
  out << energy_csv_header() << '\n';
  for (const auto& row : rows) out << energy_csv_row(to_string(param), row.value, row.report) << '\n';
  return out.str();
}

inline std::string format_report(const EnergyReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "link: " << to_string(r.link) << "\n";
  out << "                 conventional        coded\n";
  auto line = [&](const char* name, double a, double b) {
    out << "  " << std::left << std::setw(14) << name << std::right << std::setw(13) << a << std::setw(13) << b
        << " pJ\n";
  };
  line("analog", r.conventional.analog, r.coded.analog);
  line("adc+mipi", r.conventional.readout, r.coded.readout);
  line("ce control", r.conventional.ce_control, r.coded.ce_control);
  line("wireless", r.conventional.wireless, r.coded.wireless);
  line("total", r.conventional.total, r.coded.total);
  out << "  saving: " << r.ratio << "x\n";
  return out.str();
}

}  // namespace snappix
