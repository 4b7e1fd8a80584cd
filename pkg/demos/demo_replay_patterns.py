"""
Replay-attack patterns and their amplification arithmetic
=========================================================

A replay handle is an instruction whose misspeculation an attacker can
trigger at will.  Each squash re-executes everything younger in the
reorder buffer, so a side-channel transmit instruction placed after the
handle runs once per replay.  This demo reproduces the three patterns and
shows how the replay counts grow: serial handles add up, nested handles
multiply.
"""

from squashsim import MachineConfig, PolicyKind, build_nested, build_serial, build_single, run_scenario

BASE = MachineConfig(policy=PolicyKind.BASELINE)

############################################################
# One handle, r replays: the transmit instruction runs r+1 times
# (r squashed passes plus the final committed one).

print("single handle, no defense:")
for replays in (1, 4, 16):
    rep = run_scenario(build_single(replays), BASE)
    print(f"  replays={replays:3d}  transmit executions={rep.attack_region_executions}")

############################################################
# Serial pattern: h handles acquired and released one after the other.
# Each episode contributes r+1 executions, so totals are additive.

print("\nserial handles (additive):")
for handles, replays in [(2, 1), (5, 1), (3, 4)]:
    rep = run_scenario(build_serial(handles, replays), BASE)
    print(f"  h={handles} r={replays}  total={rep.attack_region_executions}"
          f"  (= h*(r+1) = {handles * (replays + 1)})")

############################################################
# Nested pattern: outer handles resolve slower than inner ones, and every
# outer squash re-arms the whole inner subtree.  Totals are multiplicative.

print("\nnested handles (multiplicative):")
for handles, replays in [(2, 2), (5, 1), (3, 2)]:
    rep = run_scenario(build_nested(handles, replays), BASE)
    print(f"  h={handles} r={replays}  total={rep.attack_region_executions}"
          f"  (= (r+1)^h = {(replays + 1) ** handles})")

############################################################
# The same nested attack under all four issue policies.  The defense
# variants allow at most one speculative pass of the transmit PC while its
# squash-time handles are unsafe, and at most two issues overall.

print("\nnested h=5 r=1 across policies:")
print(f"  {'policy':12s} {'S issues':>9s} {'speculative':>12s} {'unsafe replays':>15s} {'squashes':>9s}")
for policy in PolicyKind:
    rep = run_scenario(build_nested(5, 1), MachineConfig(policy=policy))
    print(f"  {str(policy):12s} {rep.attack_region_executions:9d} "
          f"{sum(rep.spec_executions_of_s.values()):12d} {rep.hot_spec_issues:15d} "
          f"{rep.squashes:9d}")
