#include "cardpipe/infer.hpp"

namespace cardpipe::infer {

// Built-in simulated devices. The six *-like rows are calibrated so that the
// virtual-clock pipeline reproduces the blocking / buffered / parallel
// frame-rate rows measured on the corresponding hardware (see
// profiles/devices.json, which carries the same values and notes). The two
// slow rows extend the sweep below 1 FPS.
const std::vector<DeviceProfile>& builtin_profiles() {
    static const std::vector<DeviceProfile> profiles = {
        {"iphone-5s-like", 500.000, 88.235, 88.0, 106.0, 2, 30.0, 1.152542, 0.0,
         "calibrated: 1.65 / 1.70 / 2.95 fps"},
        {"iphone-se-like", 107.595, 18.987, 19.0, 23.0, 2, 30.0, 1.060403, 0.0,
         "calibrated: 7.60 / 7.90 / 14.90 fps"},
        {"iphone-xr-like", 26.074, 4.601, 4.6, 5.5, 2, 60.0, 1.880000, 0.0,
         "calibrated: 28.45 / 32.60 / 32.60 fps"},
        {"lg-k20-like", 817.308, 144.231, 144.0, 173.0, 4, 30.0, 2.850000, 0.0,
         "calibrated: 1.03 / 1.04 / 1.39 fps"},
        {"xiaomi-redmi7-like", 244.957, 43.228, 43.0, 52.0, 4, 30.0, 2.838452, 0.0,
         "calibrated: 3.16 / 3.47 / 4.89 fps"},
        {"pixel-2-like", 195.402, 34.483, 34.5, 41.0, 4, 30.0, 2.188679, 30.0,
         "calibrated: 3.66 / 4.35 / 7.95 fps"},
        {"android-go-like", 2720.000, 480.000, 470.0, 560.0, 4, 30.0, 3.8, 0.0,
         "synthetic sub-1-fps device for sweep coverage"},
        {"budget-2016-like", 2040.000, 360.000, 355.0, 430.0, 4, 30.0, 3.8, 0.0,
         "synthetic sub-1-fps device for sweep coverage"},
        {"galaxy-j5-like", 1190.000, 210.000, 205.0, 250.0, 4, 30.0, 3.9, 0.0,
         "synthetic 1-2 fps device for sweep coverage"},
        {"moto-e4-like", 893.000, 157.000, 155.0, 190.0, 4, 30.0, 3.9, 0.0,
         "synthetic 1-2 fps device for sweep coverage"},
    };
    return profiles;
}

}  // namespace cardpipe::infer
