"""Independent forward kinematics for the shipped chain file.

Reads the JSON directly and composes transforms with scipy's rotation
vectors, without importing the package. Prints fingertip positions for the
all-zero and home joint states; the test suite freezes these numbers.
"""
import json
import sys
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

CHAIN = Path(__file__).resolve().parents[1] / "src/handxfer/data/reference_chain.json"


def homogeneous(R, t=(0.0, 0.0, 0.0)):
    H = np.eye(4)
    H[:3, :3] = R
    H[:3, 3] = t
    return H


def tips(chain, q):
    world = {}
    for joint, angle in zip(chain["joints"], q):
        axis = np.asarray(joint["axis"], float)
        spin = homogeneous(Rotation.from_rotvec(angle * axis / np.linalg.norm(axis)).as_matrix())
        parent = np.eye(4) if joint["parent"] is None else world[joint["parent"]]
        world[joint["name"]] = parent @ np.asarray(joint["origin"]) @ spin
    return np.array([(world[f["parent"]] @ np.asarray(f["origin"]))[:3, 3]
                     for f in chain["fingertips"]])


if __name__ == "__main__":
    chain = json.loads(CHAIN.read_text())
    np.set_printoptions(precision=17, floatmode="unique")
    for label, q in (("zero", np.zeros(len(chain["joints"]))), ("home", chain["home"])):
        print(label)
        for row in tips(chain, np.asarray(q, float)):
            print("    [" + ", ".join(repr(float(v)) for v in row) + "],", file=sys.stdout)
