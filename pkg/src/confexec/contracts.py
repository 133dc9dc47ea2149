"""Demo contract programs: token, constant-product exchange, sealed-bid
auction, a metered compute loop and test helpers."""

from __future__ import annotations

from .vm import ContractError, ExecutionContext, Program, export, register


def _bal(who: bytes) -> str:
    return "bal:" + bytes(who).hex()


def _amount(x) -> int:
    if not isinstance(x, int) or isinstance(x, bool) or x < 0:
        raise ContractError(f"bad amount {x!r}")
    return x


@register
class Token(Program):
    code_id = "token"

    def init(self, ctx: ExecutionContext, params: dict) -> None:
        ctx.put("name", str(params.get("name", "TKN")))
        ctx.put("supply", 0)

    @export
    def mint(self, ctx: ExecutionContext, to: bytes, amount: int):
        amount = _amount(amount)
        if ctx.caller != ctx.owner:
            raise ContractError("only the owner may mint")
        ctx.put(_bal(to), ctx.get(_bal(to), 0) + amount)
        ctx.put("supply", ctx.get("supply", 0) + amount)
        return True

    def _move(self, ctx: ExecutionContext, src: bytes, dst: bytes, amount: int) -> None:
        have = ctx.get(_bal(src), 0)
        if have < amount:
            raise ContractError("insufficient balance")
        ctx.put(_bal(src), have - amount)
        ctx.put(_bal(dst), ctx.get(_bal(dst), 0) + amount)

    @export
    def transfer(self, ctx: ExecutionContext, to: bytes, amount: int):
        amount = _amount(amount)
        if amount == 0:
            return True
        self._move(ctx, ctx.caller, to, amount)
        return True

    @export
    def approve(self, ctx: ExecutionContext, spender: bytes, amount: int):
        ctx.put(f"allow:{bytes(ctx.caller).hex()}:{bytes(spender).hex()}", _amount(amount))
        return True

    @export
    def transfer_from(self, ctx: ExecutionContext, src: bytes, to: bytes, amount: int):
        amount = _amount(amount)
        key = f"allow:{bytes(src).hex()}:{bytes(ctx.caller).hex()}"
        allowed = ctx.get(key, 0)
        if allowed < amount:
            raise ContractError("allowance exceeded")
        if amount == 0:
            return True
        ctx.put(key, allowed - amount)
        self._move(ctx, src, to, amount)
        return True

    @export
    def balance_of(self, ctx: ExecutionContext, who: bytes):
        return ctx.get(_bal(who), 0)

    @export
    def total_supply(self, ctx: ExecutionContext):
        return ctx.get("supply", 0)


def swap_output(reserve_in: int, reserve_out: int, amount_in: int, fee_bps: int) -> int:
    """Constant-product output, rounded in favour of the pool."""
    effective = amount_in * (10_000 - fee_bps) // 10_000
    new_in = reserve_in + effective
    # ceil(reserve_in * reserve_out / new_in)
    new_out = -(-(reserve_in * reserve_out) // new_in)
    return reserve_out - new_out


@register
class Exchange(Program):
    code_id = "dex"

    def init(self, ctx: ExecutionContext, params: dict) -> None:
        fee = int(params.get("fee_bps", 30))
        if not 0 <= fee < 10_000:
            raise ContractError("fee out of range")
        ctx.put("token_x", bytes(params["token_x"]))
        ctx.put("token_y", bytes(params["token_y"]))
        ctx.put("fee_bps", fee)
        ctx.put("rx", 0)
        ctx.put("ry", 0)

    @export
    def add_liquidity(self, ctx: ExecutionContext, amount_x: int, amount_y: int):
        amount_x, amount_y = _amount(amount_x), _amount(amount_y)
        tx, ty = ctx.get("token_x"), ctx.get("token_y")
        ctx.call(tx, "transfer_from", ctx.caller, ctx.self_address, amount_x)
        ctx.call(ty, "transfer_from", ctx.caller, ctx.self_address, amount_y)
        ctx.put("rx", ctx.get("rx") + amount_x)
        ctx.put("ry", ctx.get("ry") + amount_y)
        key = "lp:" + bytes(ctx.caller).hex()
        ctx.put(key, ctx.get(key, 0) + amount_x + amount_y)
        return True

    @export
    def swap(self, ctx: ExecutionContext, token_in: bytes, amount_in: int, min_out: int = 0):
        amount_in = _amount(amount_in)
        tx, ty = ctx.get("token_x"), ctx.get("token_y")
        if token_in == tx:
            kin, kout, token_out = "rx", "ry", ty
        elif token_in == ty:
            kin, kout, token_out = "ry", "rx", tx
        else:
            raise ContractError("token not in pool")
        rin, rout = ctx.get(kin), ctx.get(kout)
        if rin == 0 or rout == 0:
            raise ContractError("empty pool")
        out = swap_output(rin, rout, amount_in, ctx.get("fee_bps"))
        if out <= 0:
            raise ContractError("output rounds to zero")
        if out < min_out:
            raise ContractError("slippage")
        ctx.call(token_in, "transfer_from", ctx.caller, ctx.self_address, amount_in)
        ctx.call(token_out, "transfer", ctx.caller, out)
        ctx.put(kin, rin + amount_in)
        ctx.put(kout, rout - out)
        return out

    @export
    def reserves(self, ctx: ExecutionContext):
        return [ctx.get("rx"), ctx.get("ry")]


@register
class Auction(Program):
    """Sealed-bid second-price auction; ties go to the earliest bid."""

    code_id = "auction"

    def init(self, ctx: ExecutionContext, params: dict) -> None:
        ctx.put("token", bytes(params["token"]))
        ctx.put("reserve", _amount(int(params.get("reserve", 0))))
        ctx.put("nbids", 0)
        ctx.put("closed", False)

    @export
    def bid(self, ctx: ExecutionContext, amount: int):
        amount = _amount(amount)
        if ctx.get("closed"):
            raise ContractError("auction closed")
        if amount == 0 or amount < ctx.get("reserve"):
            raise ContractError("bid below reserve")
        ctx.call(ctx.get("token"), "transfer_from", ctx.caller, ctx.self_address, amount)
        n = ctx.get("nbids")
        ctx.put(f"bid:{n}", (bytes(ctx.caller), amount, tuple(ctx.order)))
        ctx.put("nbids", n + 1)
        return n

    @export
    def close(self, ctx: ExecutionContext):
        if ctx.caller != ctx.owner:
            raise ContractError("only the seller may close")
        if ctx.get("closed"):
            raise ContractError("auction closed")
        token, reserve = ctx.get("token"), ctx.get("reserve")
        bids = [ctx.get(f"bid:{i}") for i in range(ctx.get("nbids"))]
        ctx.put("closed", True)
        if not bids:
            ctx.put("result", (b"", 0))
            return {"winner": b"", "price": 0}
        ranked = sorted(bids, key=lambda b: (-b[1], tuple(b[2])))
        winner, top, _ = ranked[0]
        price = max(ranked[1][1], reserve) if len(ranked) > 1 else reserve
        for bidder, amount, _ in ranked[1:]:
            ctx.call(token, "transfer", bidder, amount)
        if top > price:
            ctx.call(token, "transfer", winner, top - price)
        if price:
            ctx.call(token, "transfer", ctx.owner, price)
        ctx.put("result", (winner, price))
        return {"winner": winner, "price": price}


def compute_reference(k: int) -> int:
    return sum(i if i % 2 else -i for i in range(1, k + 1))


@register
class Compute(Program):
    code_id = "compute"

    @export
    def run(self, ctx: ExecutionContext, k: int):
        total = 0
        for i in range(1, int(k) + 1):
            ctx.tick()
            total += i if i % 2 else -i
        ctx.put("last", total)
        return total


@register
class Spin(Program):
    code_id = "spin"

    @export
    def spin(self, ctx: ExecutionContext):
        while True:
            ctx.tick()


@register
class Counter(Program):
    code_id = "counter"

    def init(self, ctx: ExecutionContext, params: dict) -> None:
        ctx.put("value", int(params.get("start", 0)))

    @export
    def incr(self, ctx: ExecutionContext, by: int = 1):
        v = ctx.get("value") + int(by)
        ctx.put("value", v)
        return v

    @export
    def get(self, ctx: ExecutionContext):
        return ctx.get("value")

    @export
    def fail(self, ctx: ExecutionContext):
        ctx.put("value", -1)
        raise ContractError("requested failure")


@register
class Proxy(Program):
    """Forwards calls; with ``catch`` set, callee failures become a return value."""

    code_id = "proxy"

    @export
    def forward(self, ctx: ExecutionContext, target: bytes, function: str, args, catch: bool = False):
        ctx.put("calls", ctx.get("calls", 0) + 1)
        if not catch:
            return ctx.call(target, function, *args)
        try:
            return ctx.call(target, function, *args)
        except ContractError as exc:
            return "caught:" + exc.code

    @export
    def recurse(self, ctx: ExecutionContext, depth: int):
        if depth <= 0:
            return 0
        return 1 + ctx.call(ctx.self_address, "recurse", depth - 1)
