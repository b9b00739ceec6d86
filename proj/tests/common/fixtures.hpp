#pragma once

// Small shared instances for the unit and acceptance tests.

#include <vector>

#include "svs/channel.hpp"
#include "svs/mdp.hpp"
#include "svs/stream.hpp"

namespace svs::fixtures {

// f_intra=4, f_gop=2, one enhancement layer; types I, P, B1.
inline StreamProfile toy_profile() {
  return profile_from_bytes("toy", 4, 2, 30.0, {{800, 400, 200}, {800, 400, 200}}, {40.0, 20.0}, 160.0);
}

inline ChannelState make_state(Bits packet_bits, int packets, double y) {
  ChannelState c;
  c.packet_bits = packet_bits;
  c.packets = packets;
  c.packet_error = y;
  c.modulation_bits = 1;
  c.bits_per_slot = static_cast<double>(packet_bits * packets);
  return c;
}

inline ChannelModel toy_channel() {
  return ChannelModel({make_state(2000, 2, 0.2), make_state(2000, 4, 0.1)}, {{0.8, 0.2}, {0.2, 0.8}}, 1.0 / 30.0);
}

inline MdpConfig toy_mdp_config() {
  MdpConfig c;
  c.window = 2;
  c.post_cap = 4;
  return c;
}

// Two-level B hierarchy: f_intra=8, f_gop=4, L=2.
inline StreamProfile hier_profile() {
  return profile_from_bytes("hier", 8, 4, 30.0, {{6712, 2499, 928, 520}, {8302, 8293, 3373, 2775}, {5844, 5773, 2177, 1893}},
                            {16.27, 5.491, 4.124}, 65.08);
}

// Toy MDP with exact boundary dynamics.
struct Toy {
  StateSpace sp = enumerate_states(toy_profile(), toy_channel(), toy_mdp_config());
  BoundaryDynamics bd = boundary_truncated_solve(sp);
};

inline ChannelModel single_state_channel(Bits packet_bits, int packets, double y) {
  return ChannelModel({make_state(packet_bits, packets, y)}, {{1.0}}, 1.0 / 30.0);
}

}  // namespace svs::fixtures
