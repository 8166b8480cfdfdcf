#pragma once

// Shared synthetic camera rigs for tests: a world box the size of a
// satellite image tile and RPC cameras derived from projective views.

#include "semstereo/geometry.hpp"
#include "semstereo/synthdata.hpp"

namespace rigs {

using namespace semstereo;

inline WorldBox tile_box(double extent_m = 1024.0, double z_lo = 0.0,
                         double z_hi = 120.0) {
    return WorldBox{0.0, extent_m, 0.0, extent_m, z_lo, z_hi};
}

struct RpcRig {
    RpcCamera rpc;
    ProjectiveCamera cam;
    int width = 0;
    int height = 0;
};

inline RpcRig make_rpc_rig(const WorldBox& box, double gsd,
                           double off_nadir_deg, double azimuth_deg,
                           double cubic_jitter = 0.0, uint64_t seed = 1) {
    const SynthView view = make_view_camera(box, gsd, off_nadir_deg, azimuth_deg);
    const RpcNormalization norm = normalization_for(box, view.width, view.height);
    RpcRig rig;
    rig.cam = view.cam;
    rig.width = view.width;
    rig.height = view.height;
    rig.rpc = synth_rpc_from_projective(view.cam, norm, cubic_jitter, seed);
    return rig;
}

}  // namespace rigs
