#include "glyco/clinical.hpp"

#include <cmath>
#include <string>

#include "glyco/error.hpp"

namespace glyco {

BolusResult bolus(const BolusInputs& in) {
  for (double v : {in.cho, in.cr, in.g_c, in.g_t, in.cf, in.ps, in.iob})
    if (!std::isfinite(v)) fail(ErrorKind::InvalidValue, "bolus inputs must be finite");
  if (in.cr <= 0.0) fail(ErrorKind::Domain, "carbohydrate ratio must be positive");
  if (in.cf <= 0.0) fail(ErrorKind::Domain, "correction factor must be positive");
  if (in.ps <= 0.0) fail(ErrorKind::Domain, "physiological state multiplier must be positive");
  if (in.cho < 0.0) fail(ErrorKind::Domain, "carbohydrate intake must be non-negative");
  if (in.iob < 0.0) fail(ErrorKind::Domain, "insulin on board must be non-negative");

  BolusResult r;
  r.units = in.cho / in.cr + (in.g_c - in.g_t) / in.cf - in.ps * in.iob;
  r.no_bolus_needed = r.units < 0.0;
  return r;
}

}  // namespace glyco
