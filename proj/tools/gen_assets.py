#!/usr/bin/env python3
"""Regenerates assets/tasks/*.json and assets/fixtures/*.json.

Every task shares a few scene pieces (microwave, fridge, ...) so that
fixtures keyed by subtask description stay valid across tasks. Each subtask
has one naive program, one corrected program, and the cue phrases whose
presence in the prompt makes the scripted model answer with the correction.

    python3 tools/gen_assets.py [assets_dir]
"""

import json
import pathlib
import re
import sys

CARRY = 0.4
GRIPPER = [0.2, 0.0, 0.5, 0.0, 0.0, 0.0]


def num(v):
    v = round(float(v), 6)
    if v == 0:
        return "0"
    s = repr(v)
    return s[:-2] if s.endswith(".0") else s


def pose(x, y, z, r=0.0, p=0.0, yw=0.0):
    return "pose(" + ",".join(num(v) for v in (x, y, z, r, p, yw)) + ")"


def obj(label):
    return 'obj("%s")' % label


class Scene:
    def __init__(self):
        self.objects = []
        self.joints = []

    def add(self, label, cls, center, size, graspable=True, container=False, part_of=""):
        o = {"label": label, "class": cls, "pose": [*center, 0, 0, 0], "size": list(size),
             "graspable": graspable, "container": container}
        if part_of:
            o["part_of"] = part_of
        self.objects.append(o)
        return o

    def on_table(self, label, cls, x, y, size, **kw):
        return self.add(label, cls, [x, y, size[2] / 2], size, **kw)

    def find(self, label):
        return next(o for o in self.objects if o["label"] == label)

    def appliance(self, label, x, y, d, w, h, position=0.0, lo=0.0, hi=1.6):
        """Box with a front door (facing -x) hinged on its +y edge."""
        self.add(label, label, [x, y, h / 2], [d, w, h], graspable=False, container=True)
        front = x - d / 2
        self.add(label + " door", "door", [front - 0.01, y, h / 2], [0.02, w, h],
                 graspable=False, part_of=label)
        self.add(label + " handle", "handle", [front - 0.04, y - w / 2 + 0.05, h / 2],
                 [0.02, 0.02, 0.08], part_of=label)
        self.joints.append({"type": "hinge", "parent": label, "door": label + " door",
                            "handle": label + " handle", "axis": [0, 0, -1],
                            "origin": [front, y + w / 2, 0], "range": [lo, hi],
                            "position": position})


def out_of(label, container):
    return {"all": [{"on": [label, "table"]}, {"not": {"inside": [label, container]}}]}


def center(o):
    return o["pose"][:3]


# -- program pieces ----------------------------------------------------------

def pick(o):
    x, y, z = center(o)
    return [f"move_to({pose(x, y, CARRY)})", f"move_to({pose(*center(o))})",
            f"grasp({obj(o['label'])})", f"move_to({pose(x, y, CARRY)})"]


def pick_from_top(o):
    x, y, z = center(o)
    top = z + o["size"][2] / 2 + 0.02
    return [f"move_to({pose(x, y, CARRY)})", f"move_to({pose(x, y, top)})",
            f"grasp({obj(o['label'])})", f"move_to({pose(x, y, CARRY)})"]


def place_at(x, y, z):
    return [f"move_to({pose(x, y, CARRY)})", f"move_to({pose(x, y, z)})", "release()",
            f"move_to({pose(x, y, CARRY)})"]


def place_on(held, support, dx=0.0, dy=0.0):
    x, y, _ = center(support)
    top = support["pose"][2] + support["size"][2] / 2
    return place_at(x + dx, y + dy, top + held["size"][2] / 2 + 0.01)


def place_in(held, container):
    x, y, _ = center(container)
    return place_at(x, y, held["size"][2] / 2 + 0.02)


def open_door(scene, label, amount=1.2):
    handle = scene.find(label + " handle")
    return [f"move_to({pose(*center(handle))})", f"grasp({obj(label + ' handle')})",
            f"rotate_joint({obj(label + ' door')},{num(amount)})", "release()"]


def program(calls):
    return ";\n".join(calls)


# -- shared scene pieces -----------------------------------------------------

def microwave(s):
    s.appliance("microwave", 0.65, -0.2, 0.3, 0.4, 0.3)


def fridge(s, position=0.0):
    s.appliance("fridge", 0.7, 0.05, 0.4, 0.5, 0.5, position=position)


def toaster(s):
    s.appliance("toaster", 0.6, 0.25, 0.25, 0.3, 0.2)


def cabinet(s):
    s.appliance("cabinet", 0.7, -0.05, 0.35, 0.45, 0.4)


def oven(s):
    s.appliance("oven", 0.68, -0.15, 0.35, 0.45, 0.35)


# -- lessons -----------------------------------------------------------------
# A lesson is what a teacher says about one subtask and what a model makes of
# it. The cue must appear in the local text (in-episode correction) and, for
# transferable lessons, in the general text too.

class Lesson:
    def __init__(self, raw, local, general=None, event="violation", kind="", fires=3):
        self.raw, self.local, self.general = raw, local, general
        self.event, self.kind, self.fires = event, kind, fires


TASKS = []
GENERATE = {}  # subtask description -> {"naive", "fixed", "cues"}
PARAPHRASE = {}


def subtask_program(desc, naive, fixed=None, cues=()):
    entry = GENERATE.setdefault(desc, {"naive": naive, "fixed": fixed or naive, "cues": []})
    if entry["naive"] != naive or entry["fixed"] != (fixed or naive):
        raise SystemExit(f"conflicting programs for subtask '{desc}'")
    for c in cues:
        if c not in entry["cues"]:
            entry["cues"].append(c)


def task(name, category, scene, subtasks, goal, split="train"):
    """subtasks: (desc, action, objects, goal, naive, fixed, cues, lesson|None)."""
    teacher = []
    out_subtasks = []
    for desc, action, objects, sgoal, naive, fixed, cues, lesson in subtasks:
        labels = {o["label"] for o in scene.objects} | {"table"}
        for label in objects:
            assert label in labels, (name, label)
        subtask_program(desc, program(naive), program(fixed) if fixed else None, cues)
        out_subtasks.append({"name": desc, "action": action, "objects": objects, "goal": sgoal})
        if lesson:
            match = {"event": lesson.event, "subtask": desc}
            if lesson.kind:
                match["kind"] = lesson.kind
            teacher.append({"match": match, "feedback": lesson.raw, "max_fires": lesson.fires})
            key = " ".join(lesson.raw.lower().split())
            PARAPHRASE[key] = {"local": lesson.local, "general": lesson.general}
            assert any(c in lesson.local for c in cues), (desc, cues)
    TASKS.append({"name": name, "category": category, "split": split, "table_height": 0.0,
                  "gripper": {"pose": GRIPPER}, "objects": scene.objects, "joints": scene.joints,
                  "subtasks": out_subtasks, "goal": goal, "teacher": teacher})


# Shared lessons.
CENTER = Lesson("You grabbed the top of it. Grasp it at its center.",
                "Grasp the object at its center, not at its top.",
                "Grasp objects at their center, not at their top.")
LIFT = Lesson("You knocked into the vase. Lift it high before carrying it over.",
              "Lift the held object high before carrying it across the table.",
              "Lift held objects high before carrying them across the table.")
POSITIVE = Lesson("The door does not open that way. Pull it toward you with a positive angle.",
                  "Open the door by rotating it with a positive angle.",
                  "Hinged doors open with a positive angle.")
OPEN_FIRST = Lesson("The door is closed. Open it before putting anything inside.",
                    "Open the door before putting anything inside.",
                    "Open a closed container before putting anything inside.")


def build():
    # 1. Pick the left can
    s = Scene()
    left = s.on_table("left can", "can", 0.4, 0.2, [0.06, 0.06, 0.12])
    right = s.on_table("right can", "can", 0.4, -0.2, [0.06, 0.06, 0.12])
    task("Pick the left can", "SR", s, [
        ("pick up the left can", "pick up", ["left can"], {"holding": "left can"},
         pick(right), pick(left), ["larger y"],
         Lesson("That is the right can. Take the can on your left.",
                "The left can is the one with the larger y coordinate.",
                "Left means larger y and right means smaller y in the robot frame.",
                event="subtask_failed")),
    ], {"holding": "left can"})

    # 2. Put the banana on the plate
    s = Scene()
    banana = s.on_table("banana", "banana", 0.35, 0.2, [0.15, 0.04, 0.04])
    plate = s.on_table("plate", "plate", 0.45, -0.15, [0.2, 0.2, 0.02], graspable=False)
    task("Put the banana on the plate", "SR", s, [
        ("pick up the banana", "pick up", ["banana"], {"holding": "banana"},
         pick_from_top(banana), pick(banana), ["center"], CENTER),
        ("put the banana on the plate", "put on", ["banana", "plate"], {"on": ["banana", "plate"]},
         place_on(banana, plate), None, [], None),
    ], {"on": ["banana", "plate"]})

    # 3. Put the cube away
    s = Scene()
    cube = s.on_table("cube", "cube", 0.3, 0.25, [0.05, 0.05, 0.05])
    s.on_table("vase", "vase", 0.42, 0.05, [0.08, 0.08, 0.3], graspable=False)
    box = s.on_table("box", "box", 0.55, -0.15, [0.2, 0.2, 0.1], graspable=False, container=True)
    low = [f"move_to({pose(*center(cube))})", f"grasp({obj('cube')})",
           f"move_to({pose(box['pose'][0], box['pose'][1], 0.045)})", "release()"]
    task("Put the cube away", "LH", s, [
        ("pick up the cube", "pick up", ["cube"], {"holding": "cube"},
         pick(cube)[:3], None, [], None),
        ("put the cube in the box", "put in", ["cube", "box"], {"inside": ["cube", "box"]},
         low[2:], [f"move_to({pose(cube['pose'][0], cube['pose'][1], CARRY)})"] + place_in(cube, box),
         ["high before carrying"], LIFT),
    ], {"inside": ["cube", "box"]})

    # 4. Put the food in the microwave
    s = Scene()
    microwave(s)
    food = s.add("food", "food", [0.35, 0.2, 0.045], [0.08, 0.08, 0.05])
    s.on_table("plate", "plate", 0.35, 0.2, [0.2, 0.2, 0.02], graspable=False)
    open_mw = ("open the microwave", "open", ["microwave handle", "microwave door"],
               {"open": "microwave door"}, open_door(s, "microwave", -1.2), open_door(s, "microwave"),
               ["positive angle"], POSITIVE)
    food_mw = ("put the food in the microwave", "put in", ["food", "microwave"],
               {"inside": ["food", "microwave"]}, pick(food) + place_in(food, s.find("microwave")),
               None, [], None)
    task("Put the food in the microwave", "TR", s, [open_mw, food_mw],
         {"inside": ["food", "microwave"]})

    # 5. Put the food in the pan and place it in the microwave
    s = Scene()
    microwave(s)
    food = s.on_table("food", "food", 0.3, 0.3, [0.08, 0.08, 0.05])
    pan = s.on_table("pan", "pan", 0.38, 0.05, [0.2, 0.2, 0.06], container=True)
    into_pan = pick(food) + place_at(pan["pose"][0], pan["pose"][1], 0.06)
    pan_in = pick(pan) + place_in(pan, s.find("microwave"))
    task("Put the food in the pan and place it in the microwave", "SR", s, [
        ("put the food in the pan", "put in", ["food", "pan"], {"inside": ["food", "pan"]},
         into_pan, None, [], None),
        ("put the pan in the microwave", "put in", ["pan", "microwave"], {"inside": ["pan", "microwave"]},
         pan_in, open_door(s, "microwave") + pan_in, ["before putting"], OPEN_FIRST),
    ], {"inside": ["pan", "microwave"]})

    # 6. Put the trash away
    s = Scene()
    trash = s.on_table("trash", "trash", 0.3, 0.2, [0.06, 0.06, 0.04])
    tbin = s.on_table("trash bin", "bin", 0.5, -0.25, [0.2, 0.2, 0.2], graspable=False, container=True)
    rbin = s.on_table("recycling bin", "bin", 0.5, 0.3, [0.2, 0.2, 0.2], graspable=False, container=True)
    task("Put the trash away", "SR", s, [
        ("put the trash in the trash bin", "put in", ["trash", "trash bin"], {"inside": ["trash", "trash bin"]},
         pick(trash) + place_in(trash, rbin), pick(trash) + place_in(trash, tbin), ["not the recycling"],
         Lesson("Wrong bin! That one is for recycling.",
                "Put trash in the trash bin, not the recycling bin.", None, event="subtask_failed")),
    ], {"inside": ["trash", "trash bin"]})

    # 7. Stack the cubes
    s = Scene()
    red = s.on_table("red cube", "cube", 0.3, 0.2, [0.05, 0.05, 0.05])
    blue = s.on_table("blue cube", "cube", 0.45, -0.1, [0.06, 0.06, 0.06])
    into = pick(red) + place_at(blue["pose"][0], blue["pose"][1], blue["pose"][2])
    task("Stack the cubes", "LH", s, [
        ("stack the red cube on the blue cube", "stack on", ["red cube", "blue cube"],
         {"on": ["red cube", "blue cube"]}, into, pick(red) + place_on(red, blue), ["above the top"],
         Lesson("It fell off. Put it down on top of the blue cube, not into it.",
                "Release the cube just above the top of the one below.",
                "When stacking, release the object just above the top of the one below.",
                event="subtask_failed")),
    ], {"on": ["red cube", "blue cube"]})

    # 8. Turn on the faucet
    s = Scene()
    s.on_table("sink", "sink", 0.6, 0.0, [0.3, 0.4, 0.1], graspable=False, container=True)
    s.add("faucet", "faucet", [0.6, 0.25, 0.2], [0.04, 0.04, 0.2], graspable=False)
    s.add("faucet lever", "lever", [0.6, 0.25, 0.32], [0.1, 0.02, 0.02], part_of="faucet")
    s.joints.append({"type": "hinge", "parent": "faucet", "door": "faucet lever", "handle": "faucet lever",
                     "axis": [0, 1, 0], "origin": [0.6, 0.25, 0.31], "range": [0, 1.0], "position": 0})
    lever = s.find("faucet lever")
    turn = lambda a: [f"move_to({pose(*center(lever))})", f"grasp({obj('faucet lever')})",
                      f"rotate_joint({obj('faucet lever')},{num(a)})", "release()"]
    task("Turn on the faucet", "TR", s, [
        ("turn on the faucet", "turn on", ["faucet lever"], {"open": "faucet lever"},
         turn(0.3), turn(0.9), ["all the way"],
         Lesson("The water is barely running. Push the lever further.",
                "Turn the faucet lever all the way, about 0.9 rad.",
                "Rotate levers and knobs fully rather than a little.", event="subtask_failed")),
    ], {"open": "faucet lever"})

    # 9. Set the table
    s = Scene()
    mat = s.on_table("placemat", "placemat", 0.45, 0.0, [0.3, 0.3, 0.01], graspable=False)
    plate = s.on_table("plate", "plate", 0.3, 0.3, [0.18, 0.18, 0.02])
    cup = s.on_table("cup", "cup", 0.3, -0.3, [0.07, 0.07, 0.1])
    spot_right = [0.45, -0.2, 0.05]
    spot_left = [0.45, 0.2, 0.05]
    task("Set the table", "LH", s, [
        ("put the plate on the placemat", "put on", ["plate", "placemat"], {"on": ["plate", "placemat"]},
         pick(plate) + place_on(plate, mat), None, [], None),
        ("put the cup to the right of the plate", "put next to", ["cup", "plate"],
         {"near": ["cup", spot_right, 0.05]},
         pick(cup) + place_at(spot_left[0], spot_left[1], 0.06),
         pick(cup) + place_at(spot_right[0], spot_right[1], 0.06), ["smaller y"],
         Lesson("No, the cup goes on the other side of the plate.",
                "The cup goes to the right of the plate, at smaller y.", None, event="subtask_failed")),
    ], {"all": [{"on": ["plate", "placemat"]}, {"near": ["cup", spot_right, 0.05]}]})

    # 10. Clean up the table
    s = Scene()
    sponge = s.on_table("sponge", "sponge", 0.3, 0.25, [0.08, 0.05, 0.03])
    mug = s.on_table("mug", "mug", 0.3, -0.25, [0.07, 0.07, 0.09])
    s.on_table("vase", "vase", 0.42, 0.1, [0.08, 0.08, 0.3], graspable=False)
    basket = s.on_table("basket", "basket", 0.55, -0.05, [0.22, 0.22, 0.12], graspable=False, container=True)
    low_sponge = [f"move_to({pose(*center(sponge))})", f"grasp({obj('sponge')})",
                  f"move_to({pose(basket['pose'][0], basket['pose'][1], 0.035)})", "release()"]
    task("Clean up the table", "LH", s, [
        ("put the sponge in the basket", "put in", ["sponge", "basket"], {"inside": ["sponge", "basket"]},
         low_sponge, pick(sponge) + place_in(sponge, basket), ["high before carrying"], LIFT),
        ("put the mug in the basket", "put in", ["mug", "basket"], {"inside": ["mug", "basket"]},
         pick(mug) + place_in(mug, basket), None, [], None),
    ], {"all": [{"inside": ["sponge", "basket"]}, {"inside": ["mug", "basket"]}]})

    # 11. Heat the food
    s = Scene()
    microwave(s)
    s.on_table("plate", "plate", 0.35, 0.2, [0.2, 0.2, 0.02], graspable=False)
    s.add("food", "food", [0.35, 0.2, 0.045], [0.08, 0.08, 0.05])
    task("Heat the food", "SR", s, [open_mw, food_mw], {"inside": ["food", "microwave"]})

    # 12. Cook the food
    s = Scene()
    stove = s.on_table("stove", "stove", 0.55, -0.2, [0.3, 0.3, 0.05], graspable=False)
    counter = s.on_table("counter", "counter", 0.55, 0.25, [0.25, 0.25, 0.05], graspable=False)
    pan = s.on_table("pan", "pan", 0.3, 0.0, [0.2, 0.2, 0.06], container=True)
    task("Cook the food", "SR", s, [
        ("put the pan on the stove", "put on", ["pan", "stove"], {"on": ["pan", "stove"]},
         pick(pan) + place_on(pan, counter), pick(pan) + place_on(pan, stove), ["on the stove burner"],
         Lesson("That is the counter. Cooking happens on the stove.",
                "Put the pan on the stove burner, not the counter.", None, event="subtask_failed")),
    ], {"on": ["pan", "stove"]})

    # 13. Empty the fridge
    s = Scene()
    fridge(s)
    milk = s.add("milk", "milk", [0.7, 0.15, 0.075], [0.06, 0.06, 0.15])
    juice = s.add("juice", "juice", [0.7, -0.05, 0.075], [0.06, 0.06, 0.15])
    open_fridge = ("open the fridge", "open", ["fridge handle", "fridge door"], {"open": "fridge door"},
                   open_door(s, "fridge", -1.2), open_door(s, "fridge"), ["positive angle"], POSITIVE)
    task("Empty the fridge", "LH", s, [
        open_fridge,
        ("take the milk out of the fridge", "take out", ["milk", "fridge"], out_of("milk", "fridge"),
         pick(milk) + place_at(0.3, 0.25, 0.085), None, [], None),
        ("take the juice out of the fridge", "take out", ["juice", "fridge"], out_of("juice", "fridge"),
         pick(juice) + place_at(0.3, -0.25, 0.085), None, [], None),
    ], {"all": [out_of("milk", "fridge"), out_of("juice", "fridge")]})

    # 14. Make toast
    s = Scene()
    toaster(s)
    bread = s.on_table("bread", "bread", 0.3, -0.2, [0.1, 0.1, 0.02])
    task("Make toast", "SR", s, [
        ("open the toaster", "open", ["toaster handle", "toaster door"], {"open": "toaster door"},
         open_door(s, "toaster", 0.5), open_door(s, "toaster"), ["fully open"],
         Lesson("It is still mostly closed. Pull the toaster door all the way open.",
                "Rotate the toaster door about 1.2 rad so it is fully open.", None,
                event="subtask_failed")),
        ("put the bread in the toaster", "put in", ["bread", "toaster"], {"inside": ["bread", "toaster"]},
         pick(bread) + place_in(bread, s.find("toaster")), None, [], None),
    ], {"all": [{"open": "toaster door"}, {"inside": ["bread", "toaster"]}]})

    # 15. Move the lonely object to the others
    s = Scene()
    apple = s.on_table("apple", "apple", 0.45, 0.2, [0.07, 0.07, 0.07])
    s.on_table("orange", "orange", 0.5, 0.28, [0.07, 0.07, 0.07])
    s.on_table("pear", "pear", 0.55, 0.18, [0.07, 0.07, 0.08])
    mug = s.on_table("mug", "mug", 0.35, -0.3, [0.07, 0.07, 0.09])
    goal_spot = [0.42, 0.08, 0.045]
    task("Move the lonely object to the others", "SR", s, [
        ("move the lonely object next to the others", "move next to", ["mug", "apple"],
         {"near": ["mug", goal_spot, 0.06]},
         pick(apple) + place_at(0.35, -0.2, 0.045),
         pick(mug) + place_at(goal_spot[0], goal_spot[1], 0.055), ["farthest from"],
         Lesson("Not that one. Move the mug, it is the one standing alone.",
                "The lonely object is the mug, the one farthest from the others.",
                "The lonely object is the one farthest from all the rest.", event="subtask_failed")),
    ], {"near": ["mug", goal_spot, 0.06]})

    # 16. Move the right can to the left can
    s = Scene()
    left = s.on_table("left can", "can", 0.4, 0.25, [0.06, 0.06, 0.12])
    right = s.on_table("right can", "can", 0.4, -0.25, [0.06, 0.06, 0.12])
    task("Move the right can to the left can", "SR", s, [
        ("move the right can next to the left can", "move next to", ["right can", "left can"],
         {"near": ["right can", [0.4, 0.15, 0.06], 0.05]},
         pick(left) + place_at(0.4, -0.15, 0.07), pick(right) + place_at(0.4, 0.15, 0.07),
         ["smaller y"],
         Lesson("You moved the wrong can. Bring the right one over to the left one.",
                "The right can is the one at smaller y; move it next to the left can.",
                "Left means larger y and right means smaller y in the robot frame.",
                event="subtask_failed")),
    ], {"near": ["right can", [0.4, 0.15, 0.06], 0.05]})

    # 17. Open the fridge
    s = Scene()
    fridge(s)
    s.add("milk", "milk", [0.7, 0.15, 0.075], [0.06, 0.06, 0.15])
    task("Open the fridge", "TR", s, [open_fridge], {"open": "fridge door"})

    # 18. Open the bottle
    def bottle(s, position):
        s.on_table("bottle", "bottle", 0.45, 0.0, [0.07, 0.07, 0.2], graspable=False)
        s.add("bottle cap", "cap", [0.45, 0.0, 0.215], [0.03, 0.03, 0.03], part_of="bottle")
        s.joints.append({"type": "hinge", "parent": "bottle", "door": "bottle cap", "handle": "bottle cap",
                         "axis": [0, 0, 1], "origin": [0.45, 0.0, 0.2], "range": [0, 3.2],
                         "position": position})
        return [f"move_to({pose(0.45, 0.0, 0.215)})", f"grasp({obj('bottle cap')})"]

    s = Scene()
    reach = bottle(s, 0.0)
    task("Open the bottle", "TR", s, [
        ("open the bottle", "open", ["bottle cap", "bottle"], {"open": "bottle cap"},
         reach + [f"rotate_joint({obj('bottle cap')},-3)", "release()"],
         reach + [f"rotate_joint({obj('bottle cap')},3)", "release()"], ["counterclockwise"],
         Lesson("That tightens it. Twist the cap the other way.",
                "Turn the bottle cap counterclockwise, with a positive angle, to open it.",
                "Caps and lids come off counterclockwise.", kind="joint_limit")),
    ], {"open": "bottle cap"})

    # 19. Wipe the plate
    s = Scene()
    sponge = s.on_table("sponge", "sponge", 0.3, 0.25, [0.08, 0.05, 0.03])
    plate = s.on_table("plate", "plate", 0.45, -0.1, [0.2, 0.2, 0.02], graspable=False)
    px, py, _ = center(plate)

    def wipe(z):
        return [f"move_to({pose(px, py, CARRY)})", f"move_to({pose(px - 0.06, py, z)})",
                f"move_to({pose(px + 0.06, py, z)})", f"move_to({pose(px - 0.06, py, z)})",
                f"move_to({pose(px + 0.06, py, z)})", f"move_to({pose(px, py, CARRY)})"]

    task("Wipe the plate", "CR", s, [
        ("pick up the sponge", "pick up", ["sponge"], {"holding": "sponge"}, pick(sponge), None, [], None),
        ("wipe the plate with the sponge", "wipe", ["plate", "sponge"], {"swept": ["plate", 2]},
         wipe(0.15), wipe(0.04), ["in contact"],
         Lesson("You are only waving it around. Press the sponge onto the plate.",
                "Keep the sponge in contact with the plate while wiping back and forth.",
                "Keep tools in contact with the surface when wiping.", event="subtask_failed")),
    ], {"swept": ["plate", 2]})

    # 20. Season the food
    s = Scene()
    shaker = s.on_table("salt shaker", "shaker", 0.3, 0.25, [0.04, 0.04, 0.1])
    bowl = s.on_table("bowl", "bowl", 0.45, -0.1, [0.16, 0.16, 0.06], graspable=False, container=True)
    bx, by, _ = center(bowl)
    task("Season the food", "SR", s, [
        ("pick up the salt shaker", "pick up", ["salt shaker"], {"holding": "salt shaker"},
         pick(shaker), None, [], None),
        ("season the food with the salt shaker", "pour", ["salt shaker", "bowl"],
         {"all": [{"tilted": ["salt shaker", 1.0]}, {"above": ["salt shaker", "bowl"]}]},
         [f"move_to({pose(bx, by, 0.25)})", "set_yaw(1.6rad)"],
         [f"move_to({pose(bx, by, 0.25)})", f"move_to({pose(bx, by, 0.25, 1.6)})"], ["changing the roll"],
         Lesson("Nothing comes out. Tip it over, spinning it does not pour.",
                "Tilt the salt shaker over the food by changing the roll of the gripper.",
                "To pour, tilt by changing the roll of the gripper; yaw only spins it.", event="subtask_failed")),
    ], {"all": [{"tilted": ["salt shaker", 1.0]}, {"above": ["salt shaker", "bowl"]}]})

    # -- held-out ------------------------------------------------------------

    # Place the apple on the table
    s = Scene()
    shelf = s.on_table("shelf", "shelf", 0.5, 0.1, [0.25, 0.3, 0.15], graspable=False)
    apple = s.add("apple", "apple", [0.5, 0.1, 0.15 + 0.035], [0.07, 0.07, 0.07])
    task("Place the apple on the table", "LH", s, [
        ("pick up the apple", "pick up", ["apple"], {"holding": "apple"},
         pick_from_top(apple), pick(apple), ["center"],
         Lesson("You missed it. Grab the apple in the middle.",
                "Grasp the apple at its center, not at its top.", None)),
        ("put the apple on the table", "put on", ["apple", "table"], {"on": ["apple", "table"]},
         place_at(0.3, -0.2, 0.045), None, [], None),
    ], {"on": ["apple", "table"]}, split="heldout")

    # Pour the can
    s = Scene()
    can = s.on_table("can", "can", 0.3, 0.25, [0.06, 0.06, 0.12])
    cup = s.on_table("cup", "cup", 0.45, -0.1, [0.08, 0.08, 0.1], graspable=False, container=True)
    cx, cy, _ = center(cup)
    task("Pour the can", "TR", s, [
        ("pick up the can", "pick up", ["can"], {"holding": "can"}, pick(can), None, [], None),
        ("pour the can into the cup", "pour", ["can", "cup"],
         {"all": [{"tilted": ["can", 1.0]}, {"above": ["can", "cup"]}]},
         [f"move_to({pose(cx, cy, 0.3)})", "set_yaw(1.6rad)"],
         [f"move_to({pose(cx, cy, 0.3)})", f"move_to({pose(cx, cy, 0.3, 1.6)})"], ["changing the roll"],
         Lesson("Nothing is pouring out. Tip the can over the cup.",
                "Tilt the can over the cup by changing the roll of the gripper.", None,
                event="subtask_failed")),
    ], {"all": [{"tilted": ["can", 1.0]}, {"above": ["can", "cup"]}]}, split="heldout")

    # Close the bottle
    s = Scene()
    reach = bottle(s, 3.0)
    task("Close the bottle", "TR", s, [
        ("close the bottle", "close", ["bottle cap", "bottle"], {"closed": "bottle cap"},
         reach + [f"rotate_joint({obj('bottle cap')},3)", "release()"],
         reach + [f"rotate_joint({obj('bottle cap')},-3)", "release()"], ["counterclockwise"],
         Lesson("It is already as open as it gets. Twist it the other way to close it.",
                "Caps come off counterclockwise, so close the bottle cap by turning it the other way.",
                None, kind="joint_limit")),
    ], {"closed": "bottle cap"}, split="heldout")

    # Empty the cabinet
    s = Scene()
    cabinet(s)
    cup = s.add("cup", "cup", [0.7, 0.0, 0.05], [0.07, 0.07, 0.1])
    task("Empty the cabinet", "SR", s, [
        ("open the cabinet", "open", ["cabinet handle", "cabinet door"], {"open": "cabinet door"},
         open_door(s, "cabinet", -1.2), open_door(s, "cabinet"), ["positive angle"],
         Lesson("Wrong way, the hinge is on the other side. Pull the door toward you.",
                "Open the cabinet door by rotating it with a positive angle.", None, kind="joint_limit")),
        ("take the cup out of the cabinet", "take out", ["cup", "cabinet"], out_of("cup", "cabinet"),
         pick(cup) + place_at(0.3, 0.25, 0.06), None, [], None),
    ], out_of("cup", "cabinet"), split="heldout")

    # Put the food in the oven
    s = Scene()
    oven(s)
    food = s.on_table("food", "food", 0.3, 0.25, [0.08, 0.08, 0.05])
    task("Put the food in the oven", "CR", s, [
        ("open the oven", "open", ["oven handle", "oven door"], {"open": "oven door"},
         open_door(s, "oven", -1.2), open_door(s, "oven"), ["positive angle"],
         Lesson("That is not how the oven opens. Pull the door toward you.",
                "Open the oven door by rotating it with a positive angle.", None, kind="joint_limit")),
        ("put the food in the oven", "put in", ["food", "oven"], {"inside": ["food", "oven"]},
         pick(food) + place_in(food, s.find("oven")), None, [], None),
    ], {"inside": ["food", "oven"]}, split="heldout")


def template_calls():
    """Held-out subtasks that a learned door template solves directly."""
    return {
        "open the cabinet": 'open_door(obj("cabinet handle"),obj("cabinet door"))',
        "open the oven": 'open_door(obj("oven handle"),obj("oven door"))',
    }


def rounded(v):
    if isinstance(v, float):
        r = round(v, 6)
        return 0.0 if r == 0 else r
    if isinstance(v, list):
        return [rounded(x) for x in v]
    if isinstance(v, dict):
        return {k: rounded(x) for k, x in v.items()}
    return v


def slug(name):
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def main():
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent.parent / "assets")
    build()
    tasks_dir = root / "tasks"
    tasks_dir.mkdir(parents=True, exist_ok=True)
    for old in tasks_dir.glob("*.json"):
        old.unlink()
    for t in TASKS:
        (tasks_dir / (slug(t["name"]) + ".json")).write_text(json.dumps(rounded(t), indent=1) + "\n")

    decompose = []
    for t in TASKS:
        answer = [{"description": s["name"], "action": s["action"], "objects": s["objects"]}
                  for s in t["subtasks"]]
        decompose.append({"role": "decompose", "key": t["name"], "response": answer})

    generate = []
    calls = template_calls()
    for desc, entry in GENERATE.items():
        if desc in calls:
            generate.append({"role": "generate", "key": desc, "when_contains": ["template open_door("],
                             "response": calls[desc]})
        for cue in entry["cues"]:
            generate.append({"role": "generate", "key": desc, "when_contains": [cue],
                             "response": entry["fixed"]})
        # Repair prompts fall back to the corrected program.
        generate.append({"role": "generate", "key": desc, "when_contains": ["was rejected"],
                         "response": entry["fixed"]})
        generate.append({"role": "generate", "key": desc, "response": entry["naive"]})

    paraphrase = [{"role": "paraphrase", "key": k, "response": v} for k, v in PARAPHRASE.items()]
    paraphrase.append({"role": "paraphrase", "key": "*", "response": {"local": "{key}", "general": None}})

    fixtures = root / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    for name, data in (("decompose", decompose), ("generate", generate), ("paraphrase", paraphrase)):
        (fixtures / (name + ".json")).write_text(json.dumps(data, indent=1) + "\n")
    print(f"{len(TASKS)} tasks, {len(generate)} generate fixtures, {len(paraphrase)} paraphrase fixtures")


if __name__ == "__main__":
    main()
