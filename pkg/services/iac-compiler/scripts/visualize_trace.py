#!/usr/bin/env python3
"""
Visualize a Dry-run Trace

Draws the event trace printed by `iacc simulate` as a Gantt chart: one bar
per step from Begin to End (or Fail), coloured by step action.
"""

import argparse
import os
import sys
from typing import Dict, List, Optional, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Patch

from core.errors import IacError
from core.planner import Plan, StepAction
from core.simulator import EventTrace, Phase

ACTION_COLORS = {
    StepAction.PROVISION: "#2196F3",
    StepAction.WAIT_SSH: "#90CAF9",
    StepAction.CONFIGURE: "#4CAF50",
    StepAction.START: "#8BC34A",
    StepAction.CHECKPOINT: "#FF9800",
    StepAction.RESTORE: "#FFC107",
    StepAction.ATTACH_LB: "#9C27B0",
    StepAction.DETACH_LB: "#CE93D8",
    StepAction.REDIRECT: "#795548",
    StepAction.TERMINATE: "#607D8B",
}
FAIL_COLOR = "#F44336"


def load_trace(filepath: str) -> EventTrace:
    with open(filepath, "r", encoding="utf-8") as f:
        return EventTrace.from_text(f.read())


def load_plan(filepath: Optional[str]) -> Optional[Plan]:
    if not filepath:
        return None
    with open(filepath, "r", encoding="utf-8") as f:
        return Plan.from_json(f.read())


def _action_of(step_id: str) -> Optional[StepAction]:
    name = step_id.split("(", 1)[0]
    try:
        return StepAction(name)
    except ValueError:
        return None


class TraceVisualizer:
    """Turns an EventTrace into per-step spans and plots them"""

    def __init__(self, trace: EventTrace, plan: Optional[Plan] = None):
        self.trace = trace
        self.plan = plan
        # step -> (begin, finish, failed)
        self.spans: Dict[str, Tuple[int, int, bool]] = {}
        self.skipped: List[str] = []
        self._extract_spans()

    def _extract_spans(self):
        begins: Dict[str, int] = {}
        for event in self.trace.events:
            if event.phase == Phase.BEGIN:
                begins[event.step] = event.tick
            elif event.step in begins:
                self.spans[event.step] = (begins[event.step], event.tick, event.phase == Phase.FAIL)

        if self.plan is not None:
            self.skipped = [sid for sid in self.plan.linearize()
                            if sid not in self.spans and not self.plan.step(sid).satisfied]

    def create_gantt(self, output_file: str = "trace_gantt.png"):
        rows = sorted(self.spans, key=lambda sid: (self.spans[sid][0], sid))
        labels = rows + [f"{sid} (skipped)" for sid in self.skipped]

        fig, ax = plt.subplots(figsize=(14, max(3, 0.45 * len(labels) + 1.5)))
        for y, sid in enumerate(rows):
            begin, finish, failed = self.spans[sid]
            color = FAIL_COLOR if failed else ACTION_COLORS.get(_action_of(sid), "#BDBDBD")
            ax.barh(y, max(finish - begin, 0.5), left=begin, height=0.6, color=color, edgecolor="black", linewidth=0.5)
            ax.text(finish + 0.5, y, str(finish - begin), va="center", fontsize=8)

        ax.set_yticks(range(len(labels)))
        ax.set_yticklabels(labels, fontsize=9)
        ax.invert_yaxis()
        ax.set_xlabel("Logical tick", fontsize=12, fontweight="bold")
        ax.set_title(f"Dry run: {self.trace.status.value} at tick {self.trace.end_tick}",
                     fontsize=13, fontweight="bold")
        ax.grid(axis="x", alpha=0.3)

        present = {_action_of(sid) for sid in rows}
        legend = [Patch(color=color, label=action.value) for action, color in ACTION_COLORS.items() if action in present]
        if any(failed for _, _, failed in self.spans.values()):
            legend.append(Patch(color=FAIL_COLOR, label="Fail"))
        if legend:
            ax.legend(handles=legend, loc="lower right", fontsize=9)

        plt.tight_layout()
        plt.savefig(output_file, dpi=150, bbox_inches="tight")
        plt.close(fig)
        print(f"✓ Saved: {output_file}")


def main():
    parser = argparse.ArgumentParser(
        description="Draw an iacc simulate trace as a Gantt chart"
    )
    parser.add_argument("--trace", required=True, help="Trace file written by `iacc simulate`")
    parser.add_argument("--plan", help="Plan JSON, to list skipped steps")
    parser.add_argument("--output", default="./charts/trace_gantt.png",
                        help="Output image (default: ./charts/trace_gantt.png)")

    args = parser.parse_args()

    try:
        visualizer = TraceVisualizer(load_trace(args.trace), load_plan(args.plan))
    except (OSError, ValueError, IacError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)

    os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
    visualizer.create_gantt(args.output)


if __name__ == "__main__":
    main()
