method AllPositive(a: array<int>) returns (ok: bool)
  ensures ok == (forall k :: 0 <= k < a.Length ==> a[k] > 0)
{
  ok := true;
  var i := 0;
  while i < a.Length
    invariant 0 <= i <= a.Length
    invariant ok == (forall k :: 0 <= k < i ==> a[k] > 0)
    decreases a.Length - i
  {
    if a[i] <= 0 {
      ok := false;
    }
    i := i + 1;
  }
}
