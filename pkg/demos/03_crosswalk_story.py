"""The bundled crosswalk encounter, narrated tick by tick.

One autonomous vehicle approaches the zebra crossing while a replayed
pedestrian walks in and waits. The script reports when the eHMI strip
lights up, how the braking unfolds, and where the car finally rests
relative to the stop line.
"""

from hilsim.scenario import crosswalk_demo, run_scenario

STOP_LINE_X = 54.0

log, summary = run_scenario(crosswalk_demo())

strip_on = stop_frame = None
for snapshot in log.frames:
    av = snapshot.vehicles[0]
    if strip_on is None and av.ehmi.strip_active:
        strip_on = snapshot
    if stop_frame is None and av.ehmi.mode == "stopped":
        stop_frame = snapshot

av0 = log.frames[0].vehicles[0]
print(f"t= 0.0s  AV at x={av0.transform.x:5.1f} m doing {av0.speed:.1f} m/s; "
      f"pedestrian approaching the crossing")

if strip_on:
    av = strip_on.vehicles[0]
    print(f"t={strip_on.sim_time:5.1f}s  eHMI strip ON "
          f"(mode={av.ehmi.mode}) at x={av.transform.x:5.1f}, "
          f"v={av.speed:.1f} m/s")

braking = next(s for s in log.frames if s.vehicles[0].control.brake > 0)
print(f"t={braking.sim_time:5.1f}s  braking begins "
      f"(brake={braking.vehicles[0].control.brake:.2f})")

if stop_frame:
    av = stop_frame.vehicles[0]
    bumper = av.transform.x + av.half_extents[0]
    print(f"t={stop_frame.sim_time:5.1f}s  complete stop: bumper "
          f"{STOP_LINE_X - bumper:.2f} m before the stop line")

final = log.frames[-1].vehicles[0]
print(f"t={log.frames[-1].sim_time:5.1f}s  run ends, AV speed "
      f"{final.speed:.3f} m/s, mode={final.ehmi.mode}")
print()
for line in summary.lines():
    print(line)

print()
print("same scenario with the pedestrian-ignore flag:")
_, reckless = run_scenario(crosswalk_demo(ignore_pedestrians=True))
print(f"  collisions: {reckless.collisions}, min gap {reckless.min_gap:.2f} m")
