import time
from datetime import datetime
from typing import Any, Dict

import psutil


class ResourceMonitor:
    def __init__(self):
        self.start_time = time.time()

    def snapshot(self) -> Dict[str, Any]:
        """Process and host resources, attached to run log entries"""
        process = psutil.Process()
        memory_info = process.memory_info()
        return {
            "timestamp": datetime.now().isoformat(),
            "process_id": process.pid,
            "memory_usage_mb": round(memory_info.rss / 1024 / 1024, 2),
            "memory_percent": round(process.memory_percent(), 2),
            "cpu_count_physical": psutil.cpu_count(logical=False),
            "cpu_count_logical": psutil.cpu_count(logical=True),
            "available_memory_mb": round(psutil.virtual_memory().available / 1024 / 1024, 2),
            "uptime": self._format_uptime(time.time() - self.start_time),
        }

    def recommended_workers(self, requested: int = 0) -> int:
        """Worker count for shot sampling; 0 means one per physical core"""
        if requested and requested > 0:
            return requested
        return max(1, psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1)

    @staticmethod
    def _format_uptime(seconds: float) -> str:
        minutes, secs = divmod(int(seconds), 60)
        hours, minutes = divmod(minutes, 60)
        if hours:
            return f"{hours}h {minutes}m {secs}s"
        return f"{minutes}m {secs}s" if minutes else f"{secs}s"


# Global resource monitor
resource_monitor = ResourceMonitor()
