"""Regenerate src/handxfer/data/reference_chain.json.

Arm: base 0.28 m, upper arm 2 x 0.21 m, forearm 2 x 0.21 m, wrist-to-palm 0.10 m.
Hand frame: +z from wrist toward fingers, +y toward the thumb, -x is the palm side.
"""
import json
import sys
from pathlib import Path

import numpy as np


def trans(x, y, z):
    M = np.eye(4)
    M[:3, 3] = [x, y, z]
    return M


def joint(name, parent, axis, origin, limits):
    return {"name": name, "parent": parent, "axis": list(axis),
            "origin": origin.tolist(), "limits": list(limits)}


def build():
    arm = [
        joint("arm_1", None, (0, 0, 1), trans(0, 0, 0.0), (-3.0, 3.0)),
        joint("arm_2", "arm_1", (0, 1, 0), trans(0, 0, 0.28), (-2.2, 2.2)),
        joint("arm_3", "arm_2", (0, 0, 1), trans(0, 0, 0.21), (-3.0, 3.0)),
        joint("arm_4", "arm_3", (0, 1, 0), trans(0, 0, 0.21), (-2.5, 2.5)),
        joint("arm_5", "arm_4", (0, 0, 1), trans(0, 0, 0.21), (-3.0, 3.0)),
        joint("arm_6", "arm_5", (0, 1, 0), trans(0, 0, 0.21), (-2.2, 2.2)),
        joint("arm_7", "arm_6", (0, 0, 1), trans(0, 0, 0.05), (-3.0, 3.0)),
    ]
    palm = 0.05  # arm_7 to palm base; with 0.05 above gives 0.10 wrist-to-palm
    knuckle = palm + 0.09
    hand = [
        joint("thumb_rot", "arm_7", (0, 0, 1), trans(-0.015, 0.035, palm + 0.03), (-0.2, 2.0)),
        joint("thumb_flex", "thumb_rot", (1, 0, 0), trans(0.0, 0.04, 0.0), (0.0, 2.0)),
        joint("index_flex", "arm_7", (0, -1, 0), trans(0, 0.03, knuckle), (0.0, 2.0)),
        joint("middle_flex", "arm_7", (0, -1, 0), trans(0, 0.01, knuckle), (0.0, 2.0)),
        joint("ring_flex", "arm_7", (0, -1, 0), trans(0, -0.01, knuckle), (0.0, 2.0)),
        joint("pinky_flex", "arm_7", (0, -1, 0), trans(0, -0.03, knuckle), (0.0, 2.0)),
    ]
    tips = [
        {"name": "thumb", "parent": "thumb_flex", "origin": trans(0.0, 0.045, 0.0).tolist()},
        {"name": "index", "parent": "index_flex", "origin": trans(0, 0, 0.045).tolist()},
        {"name": "middle", "parent": "middle_flex", "origin": trans(0, 0, 0.05).tolist()},
        {"name": "ring", "parent": "ring_flex", "origin": trans(0, 0, 0.045).tolist()},
        {"name": "pinky", "parent": "pinky_flex", "origin": trans(0, 0, 0.035).tolist()},
    ]
    home = [0.0, 0.19, 0.0, 2.04, 0.0, 0.9116, 0.0, 0.3, 0.3, 0.2, 0.2, 0.2, 0.2]
    return {"version": 1, "name": "reference_arm_hand", "arm_dof": 7, "hand_dof": 6,
            "joints": arm + hand, "fingertips": tips, "home": home}


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/handxfer/data/reference_chain.json"
    out.write_text(json.dumps(build(), indent=1))
    print(out)
