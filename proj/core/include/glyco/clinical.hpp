#pragma once

namespace glyco {

/// Glucose terms in mg/dL, insulin in units, carbohydrate in grams.
struct BolusInputs {
  double cho = 0.0;
  double cr = 1.0;
  double g_c = 0.0;
  double g_t = 0.0;
  double cf = 1.0;
  double ps = 1.0;
  double iob = 0.0;
};

struct BolusResult {
  double units = 0.0;
  /// Set when the formula comes out negative; the value is not clamped.
  bool no_bolus_needed = false;
};

/// B = CHO/CR + (G_c - G_T)/CF - PS * IOB
BolusResult bolus(const BolusInputs& in);

}  // namespace glyco
