"""A full agent session with canned replies instead of a live model.

The decomposer picks a region, the first reconstructor reply forgets a node
and gets the failure fed back, the second reply is accepted. Once the script
runs dry every further call fails and the loop stops on rejections.
"""

import logging

import numpy as np

from regionopt.gateway import AgentGateway, MockTransport, ModelConfig
from regionopt.instance import Metadata
from regionopt.orchestrator import OrchestratorConfig, run
from regionopt.solution import Solution

logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

ang = np.linspace(0, 2 * np.pi, 10, endpoint=False)
ring = Metadata(name="ring", problem="tsp", num=10, xs=np.round(100 * np.cos(ang)),
                ys=np.round(100 * np.sin(ang)))
start = Solution.tour([0, 1, 2, 3, 5, 4, 8, 6, 7, 9])

script = [
    {"reply": "Nodes 4, 6, 7 and 8 zig-zag.\n<sub>4,6,7,8</sub>", "input_tokens": 800,
     "output_tokens": 20},
    "<sol><route>0,1,3,4,5,0</route></sol>",      # node 2 is missing
    "<sol><route>0,1,3,4,2,5,0</route></sol>",
]
transport = MockTransport(script)
gateway = AgentGateway(transport, ModelConfig(retries=0))
res = run(ring, OrchestratorConfig(decomposer="llm", reconstructor="llm"), gateway, initial=start)

for i, req in enumerate(transport.requests[:3]):
    print(f"--- request {i + 1} (last lines) ---")
    print("\n".join(req.user.splitlines()[-6:]))
print()
for t in res.trace:
    print(f"iteration {t.iteration}: delta {t.local_delta} accepted {t.accepted} "
          f"objective {t.objective:.0f} {t.note}")
print(f"\n{res.initial_objective:.0f} -> {res.best_objective:.0f}, stop: {res.termination}")
led = res.ledger
print(f"{led.api_calls} calls, {led.input_tokens} in / {led.output_tokens} out"
      + (" (partly estimated)" if led.estimated else ""))
